#pragma once

// Test-only oracles.  These are written independently of the library code
// paths they check and stay deliberately simple: adaptive quadrature for
// measure integrals, the closed-form exponential of a 2x2 generator, and a
// standalone Euler-Maruyama recursion for switching diffusions.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

/// Adaptive Simpson quadrature on [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double eps = 1e-13) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, eps, 48);
}

/// Integral of f over (-inf, upper] by growing truncations; throws when the
/// truncated integrals fail to settle (the divergence detector used for
/// moment-boundary cases).
inline double integrate_left_tail(const std::function<double(double)>& f, double upper,
                                  double eps = 1e-11) {
    double prev = 0.0;
    for (int i = 0; i < 16; ++i) {
        const double lo = upper - std::ldexp(4.0, i); // 4, 8, 16, ... below upper
        const double cur = integrate(f, lo, upper);
        if (i > 0 && std::abs(cur - prev) <= eps * (1.0 + std::abs(cur))) return cur;
        prev = cur;
    }
    throw std::runtime_error("left-tail quadrature did not converge (divergent integrand?)");
}

/// exp(dt * G) for the two-state generator [[-alpha, alpha], [beta, -beta]]
/// via its eigendecomposition (eigenvalues 0 and -(alpha+beta)).
inline Eigen::Matrix2d two_state_transition(double alpha, double beta, double dt) {
    const double s = alpha + beta;
    const double e = std::exp(-s * dt);
    Eigen::Matrix2d p;
    p << (beta + alpha * e) / s, (alpha - alpha * e) / s, (beta - beta * e) / s, (alpha + beta * e) / s;
    return p;
}

/// Plain Euler-Maruyama recursion for a switching diffusion without any
/// delay structure: x <- x + f(x, i, t) dt + g(x, i, t) dB.
template <class Drift, class Diffusion>
std::vector<Eigen::VectorXd> plain_em(Eigen::VectorXd x, Drift&& f, Diffusion&& g,
                                      const std::vector<int>& regimes, const Eigen::MatrixXd& db,
                                      double dt) {
    std::vector<Eigen::VectorXd> out;
    out.push_back(x);
    for (Eigen::Index j = 0; j < db.cols(); ++j) {
        const double t = static_cast<double>(j) * dt;
        const int i = regimes[static_cast<std::size_t>(j)];
        x = x + f(x, i, t) * dt + g(x, i, t) * db.col(j);
        out.push_back(x);
    }
    return out;
}

} // namespace oracle
