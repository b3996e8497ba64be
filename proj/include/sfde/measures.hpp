#pragma once

#include <sfde/errors.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Probability measures on the negative half-line (-inf, 0].
//
// Three closed-form kinds cover everything this library simulates: a unit
// atom at 0, the exponential density a*e^{a*u} on u <= 0, and finite
// mixtures of those.  All interval conventions are half-open (a, b], so the
// atom of DiracAtZero belongs to the rightmost grid cell.
// ---------------------------------------------------------------------------

enum class MeasureKind { DiracAtZero, ExponentialDensity, Mixture };

class DelayMeasure {
public:
    static DelayMeasure dirac_at_zero() { return DelayMeasure(MeasureKind::DiracAtZero, 0.0, {}); }

    static DelayMeasure exponential(double rate) {
        if (!(rate > 0.0))
            throw ConfigError("ExponentialDensity rate must be positive, got " + std::to_string(rate));
        return DelayMeasure(MeasureKind::ExponentialDensity, rate, {});
    }

    static DelayMeasure mixture(std::vector<std::pair<double, DelayMeasure>> parts) {
        if (parts.empty()) throw ConfigError("mixture needs at least one part");
        double total = 0.0;
        for (const auto& [w, m] : parts) {
            if (!(w >= 0.0)) throw ConfigError("mixture weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("mixture weights sum to " + std::to_string(total) + ", expected 1");
        return DelayMeasure(MeasureKind::Mixture, 0.0, std::move(parts));
    }

    MeasureKind kind() const { return kind_; }
    double rate() const { return rate_; }
    const std::vector<std::pair<double, DelayMeasure>>& parts() const { return parts_; }

private:
    DelayMeasure(MeasureKind k, double rate, std::vector<std::pair<double, DelayMeasure>> parts)
        : kind_(k), rate_(rate), parts_(std::move(parts)) {}

    MeasureKind kind_;
    double rate_;
    std::vector<std::pair<double, DelayMeasure>> parts_;
};

/// Supremum of the exponents b for which exp_moment(m, b) is finite
/// (+inf for a pure atom at 0, the density rate for an exponential tail,
/// the smallest boundary among mixture parts with positive weight).
inline double moment_boundary(const DelayMeasure& m) {
    switch (m.kind()) {
        case MeasureKind::DiracAtZero:
            return std::numeric_limits<double>::infinity();
        case MeasureKind::ExponentialDensity:
            return m.rate();
        case MeasureKind::Mixture: {
            double b = std::numeric_limits<double>::infinity();
            for (const auto& [w, part] : m.parts())
                if (w > 0.0) b = std::min(b, moment_boundary(part));
            return b;
        }
    }
    return 0.0; // unreachable
}

/// Exponential moment integral of e^{-b*u} over (-inf, 0].
/// Strictly increasing in b; diverges at the boundary.
inline double exp_moment(const DelayMeasure& m, double b) {
    if (!(b >= 0.0)) throw ConfigError("exp_moment requires b >= 0");
    switch (m.kind()) {
        case MeasureKind::DiracAtZero:
            return 1.0;
        case MeasureKind::ExponentialDensity: {
            const double a = m.rate();
            if (b >= a)
                throw DivergentMomentError("exponential moment diverges: b=" + std::to_string(b) +
                                           " >= rate=" + std::to_string(a));
            return a / (a - b);
        }
        case MeasureKind::Mixture: {
            double s = 0.0;
            for (const auto& [w, part] : m.parts())
                if (w > 0.0) s += w * exp_moment(part, b);
            return s;
        }
    }
    return 0.0; // unreachable
}

/// Mass of the half-open interval (a, b] with a < b <= 0.  The atom of
/// DiracAtZero is counted whenever b == 0.
inline double interval_mass(const DelayMeasure& m, double a, double b) {
    if (!(a < b) || !(b <= 0.0)) throw ConfigError("interval_mass requires a < b <= 0");
    switch (m.kind()) {
        case MeasureKind::DiracAtZero:
            return b == 0.0 ? 1.0 : 0.0;
        case MeasureKind::ExponentialDensity: {
            const double r = m.rate();
            const double lo = std::isinf(a) ? 0.0 : std::exp(r * a);
            return std::exp(r * b) - lo;
        }
        case MeasureKind::Mixture: {
            double s = 0.0;
            for (const auto& [w, part] : m.parts()) s += w * interval_mass(part, a, b);
            return s;
        }
    }
    return 0.0; // unreachable
}

/// Mass of the infinite tail (-inf, -k].
inline double tail_mass(const DelayMeasure& m, double k) {
    if (!(k > 0.0)) throw ConfigError("tail_mass requires k > 0");
    switch (m.kind()) {
        case MeasureKind::DiracAtZero:
            return 0.0;
        case MeasureKind::ExponentialDensity:
            return std::exp(-m.rate() * k);
        case MeasureKind::Mixture: {
            double s = 0.0;
            for (const auto& [w, part] : m.parts()) s += w * tail_mass(part, k);
            return s;
        }
    }
    return 0.0; // unreachable
}

// ---------------------------------------------------------------------------
// Grid discretization.  weights(i) is the mass of (t_h, t_{h+1}] for
// h = -k*k1 + i, i = 0 .. k*k1 - 1, i.e. weights(0) covers the oldest cell
// (-k, -k+dt] and weights(k*k1-1) the newest cell (-dt, 0].  The lumped
// tail carries everything older than -k.
// ---------------------------------------------------------------------------

struct DiscretizedMeasure {
    double dt = 0.0;         // 1 / k1
    int k1 = 0;              // grid points per unit time
    int horizon = 0;         // window length k in time units
    Eigen::VectorXd weights; // size k * k1
    double tail = 0.0;

    Eigen::Index span() const { return weights.size(); }
};

/// Compensated (Neumaier) sum of the cell weights plus the tail; the
/// mass-conservation invariant is checked against this value so that plain
/// summation noise over long windows does not mask it.
inline double total_mass(const DiscretizedMeasure& d) {
    double sum = 0.0, comp = 0.0;
    auto add = [&](double v) {
        double t = sum + v;
        comp += (std::abs(sum) >= std::abs(v)) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    };
    for (Eigen::Index i = 0; i < d.weights.size(); ++i) add(d.weights(i));
    add(d.tail);
    return sum + comp;
}

inline DiscretizedMeasure discretize(const DelayMeasure& m, int k1, int horizon_k) {
    if (k1 < 1) throw ConfigError("discretize requires k1 >= 1");
    if (horizon_k < 1) throw ConfigError("discretize requires horizon k >= 1");
    DiscretizedMeasure d;
    d.k1 = k1;
    d.dt = 1.0 / static_cast<double>(k1);
    d.horizon = horizon_k;
    const Eigen::Index n = static_cast<Eigen::Index>(horizon_k) * k1;
    d.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // t_h for h = -(n-i); the oldest endpoint is pinned to -k exactly so
        // the cell boundary coincides with the tail boundary bit-for-bit.
        const double lo = (i == 0) ? -static_cast<double>(horizon_k)
                                   : -static_cast<double>(n - i) * d.dt;
        const double hi = (i == n - 1) ? 0.0 : -static_cast<double>(n - i - 1) * d.dt;
        d.weights(i) = interval_mass(m, lo, hi);
    }
    d.tail = tail_mass(m, static_cast<double>(horizon_k));
    return d;
}

} // namespace sfde
