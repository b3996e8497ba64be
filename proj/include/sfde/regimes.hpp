#pragma once

#include <sfde/errors.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Continuous-time Markov chain on {1, ..., N}: generator, one-step
// transition matrix over a grid step, and grid-sampled paths.  States are
// 1-based everywhere they are visible.
// ---------------------------------------------------------------------------

class RegimeGenerator {
public:
    explicit RegimeGenerator(Eigen::MatrixXd rates) : gamma_(std::move(rates)) {
        if (gamma_.rows() != gamma_.cols() || gamma_.rows() < 1)
            throw NonGeneratorError("generator must be a nonempty square matrix");
        for (Eigen::Index i = 0; i < gamma_.rows(); ++i) {
            double row = 0.0;
            for (Eigen::Index j = 0; j < gamma_.cols(); ++j) {
                if (i != j && gamma_(i, j) < 0.0)
                    throw NonGeneratorError("off-diagonal rate gamma(" + std::to_string(i + 1) + "," +
                                            std::to_string(j + 1) + ") is negative");
                row += gamma_(i, j);
            }
            if (std::abs(row) > 1e-12)
                throw NonGeneratorError("generator row " + std::to_string(i + 1) + " sums to " +
                                        std::to_string(row) + ", expected 0");
        }
    }

    int states() const { return static_cast<int>(gamma_.rows()); }
    const Eigen::MatrixXd& rates() const { return gamma_; }

private:
    Eigen::MatrixXd gamma_;
};

struct TransitionMatrix {
    Eigen::MatrixXd P;
    double dt = 0.0;

    int states() const { return static_cast<int>(P.rows()); }
};

/// Discrete regime trajectory theta(t_j), j = 0..steps, 1-based states.
struct RegimePath {
    std::vector<int> states;
    int state_count = 0;

    long steps() const { return static_cast<long>(states.size()) - 1; }
    int at(long j) const { return states[static_cast<std::size_t>(j)]; }
};

/// Dense matrix exponential by scaling-and-squaring with the order-13 Pade
/// approximant (the standard expm core; matrices here are small).
inline Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& a) {
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const double theta13 = 5.371920351148152;
    const Eigen::Index n = a.rows();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);

    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff(); // infinity norm
    int squarings = 0;
    Eigen::MatrixXd as = a;
    if (norm > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
        as /= std::ldexp(1.0, squarings);
    }

    const Eigen::MatrixXd a2 = as * as;
    const Eigen::MatrixXd a4 = a2 * a2;
    const Eigen::MatrixXd a6 = a4 * a2;
    const Eigen::MatrixXd u =
        as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    const Eigen::MatrixXd v =
        a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

    Eigen::MatrixXd r = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < squarings; ++i) r = r * r;
    return r;
}

/// One-step transition matrix exp(dt * Gamma).  Tiny negative round-off
/// entries (magnitude below 1e-14) are clipped to zero and each row is
/// rescaled back to unit mass.
inline TransitionMatrix transition_matrix(const RegimeGenerator& g, double dt) {
    if (!(dt > 0.0)) throw ConfigError("transition_matrix requires dt > 0");
    Eigen::MatrixXd p = matrix_exponential(dt * g.rates());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j)
            if (p(i, j) < 0.0 && p(i, j) > -1e-14) p(i, j) = 0.0;
        const double row = p.row(i).sum();
        p.row(i) /= row;
    }
    return TransitionMatrix{std::move(p), dt};
}

/// Uniform variate stream consumed by regime sampling; one call per step.
/// Implementations must be pure functions of the step index so that paths
/// can be replayed and coupled across configurations.
class UniformStream {
public:
    virtual ~UniformStream() = default;
    virtual double uniform(std::uint64_t step) const = 0;
};

/// Inverse-CDF sampling over cumulative row sums, exactly one uniform per
/// step (even when a row is a point mass).
inline RegimePath sample_regime_path(const TransitionMatrix& tm, int initial_state, long steps,
                                     const UniformStream& u) {
    const int n = tm.states();
    if (initial_state < 1 || initial_state > n)
        throw ConfigError("initial state " + std::to_string(initial_state) + " outside {1.." +
                          std::to_string(n) + "}");
    RegimePath path;
    path.state_count = n;
    path.states.resize(static_cast<std::size_t>(steps) + 1);
    path.states[0] = initial_state;
    int cur = initial_state - 1;
    for (long j = 0; j < steps; ++j) {
        const double v = u.uniform(static_cast<std::uint64_t>(j));
        double cum = 0.0;
        int next = n - 1;
        for (int s = 0; s < n; ++s) {
            cum += tm.P(cur, s);
            if (v < cum) {
                next = s;
                break;
            }
        }
        cur = next;
        path.states[static_cast<std::size_t>(j) + 1] = cur + 1;
    }
    return path;
}

/// Solves pi * Gamma = 0 with sum(pi) = 1 as a dense linear system (the
/// normalization equation replaces one redundant balance equation).
inline Eigen::VectorXd stationary_distribution(const RegimeGenerator& g) {
    const int n = g.states();
    Eigen::MatrixXd a = g.rates().transpose();
    a.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible())
        throw ReducibleError("generator is reducible: stationary system is singular");
    Eigen::VectorXd pi = lu.solve(rhs);
    if ((g.rates().transpose() * pi).cwiseAbs().maxCoeff() > 1e-10)
        throw ReducibleError("stationary solve residual exceeds 1e-10");
    return pi;
}

} // namespace sfde
