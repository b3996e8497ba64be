#pragma once

#include <sfde/errors.hpp>
#include <sfde/history.hpp>
#include <sfde/model.hpp>
#include <sfde/noise.hpp>
#include <sfde/regimes.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Explicit one-step scheme for the finite-window equation: the state is
// advanced by drift and diffusion evaluated at the current value, the
// discrete delay aggregates of the window and the sampled regime, driven by
// externally supplied Brownian increments so that runs at different
// resolutions stay coupled on one probability space.
// ---------------------------------------------------------------------------

struct GridSpec {
    int k1 = 64;      // grid points per unit time, dt = 1/k1
    int horizon = 1;  // window length k in whole time units
    double t_final = 1.0;

    double dt() const { return 1.0 / static_cast<double>(k1); }

    long n_steps() const {
        const double raw = t_final * static_cast<double>(k1);
        const long n = static_cast<long>(std::llround(raw));
        if (std::abs(raw - static_cast<double>(n)) > 1e-9)
            throw ConfigError("t_final * k1 must be an integer number of steps");
        return n;
    }

    void validate() const {
        if (k1 < 1) throw ConfigError("grid k1 must be >= 1");
        if (horizon < 1) throw ConfigError("grid horizon k must be >= 1");
        if (!(t_final > 0.0)) throw ConfigError("grid t_final must be positive");
        (void)n_steps();
    }
};

enum class SchemeKind { Em, TruncatedEm };

inline const char* scheme_name(SchemeKind s) {
    return s == SchemeKind::Em ? "em" : "truncated-em";
}

struct Trajectory {
    Eigen::MatrixXd states;  // dim x (n_steps + 1)
    std::vector<int> regimes;
    GridSpec grid;
    SchemeKind scheme = SchemeKind::Em;

    long n_steps() const { return states.cols() - 1; }
    double time_at(long j) const { return static_cast<double>(j) * grid.dt(); }
    Eigen::VectorXd terminal() const { return states.col(states.cols() - 1); }
};

struct EmOptions {
    double guard = 1e8;            // blow-up threshold on |X|
    long resync_every = 1024;      // cadence of the fast-path consistency check
    double resync_tol = 1e-8;      // relative divergence that aborts the run
    // Truncated scheme only: arguments of F and G are clamped to magnitude
    // clamp_scale * dt^{clamp_exponent}; clamp_scale defaults to twice the
    // (at least 1) fading norm of the initial segment.
    std::optional<double> clamp_scale;
    double clamp_exponent = -0.25;
};

namespace detail {

// Per-aggregate evaluation strategy: O(1) geometric recursion for pure
// exponential densities, full weighted sum otherwise.  The fast path is
// re-anchored against the naive sum on a fixed cadence to cap round-off
// drift.
class AggregateEvaluator {
public:
    AggregateEvaluator(const DelayAggregateSpec& spec, const HistoryWindow& w, long resync_every,
                       double resync_tol)
        : spec_(spec), disc_(discretize(spec.measure, w.k1(), w.horizon())),
          resync_every_(resync_every), resync_tol_(resync_tol) {
        if (spec.measure.kind() == MeasureKind::ExponentialDensity)
            carry_ = init_exp_carry(w, spec.measure.rate(), spec_);
    }

    Eigen::VectorXd value(const HistoryWindow& w) {
        if (!carry_) return aggregate_naive(w, disc_, spec_);
        Eigen::VectorXd fast = aggregate_fast_exponential(w, spec_, *carry_);
        if (w.newest_index() - carry_->synced_at >= resync_every_) {
            const Eigen::VectorXd exact = aggregate_naive(w, disc_, spec_);
            if ((fast - exact).norm() > resync_tol_ * (1.0 + exact.norm()))
                throw InternalConsistencyError(
                    "fast exponential aggregate drifted beyond tolerance at step " +
                    std::to_string(w.newest_index()));
            *carry_ = init_exp_carry(w, spec_.measure.rate(), spec_);
            fast = exact;
        }
        return fast;
    }

    void on_push(const HistoryWindow& w) {
        if (carry_) exp_carry_push(*carry_, w, spec_);
    }

private:
    DelayAggregateSpec spec_;
    DiscretizedMeasure disc_;
    long resync_every_;
    double resync_tol_;
    std::optional<ExpAggregateCarry> carry_;
};

inline Eigen::VectorXd clamp_magnitude(const Eigen::VectorXd& v, double bound) {
    const double n = v.norm();
    return n > bound ? Eigen::VectorXd(v * (bound / n)) : v;
}

inline Trajectory integrate_impl(const CoefficientModel& mod, const InitialSegment& xi,
                                 const GridSpec& grid, const RegimePath& regimes,
                                 const Eigen::Ref<const Eigen::MatrixXd>& increments,
                                 const EmOptions& opts, SchemeKind scheme) {
    grid.validate();
    const long n_steps = grid.n_steps();
    if (regimes.steps() < n_steps)
        throw ConfigError("regime path shorter than the requested step count");
    if (increments.rows() != mod.brownian_dim || increments.cols() < n_steps)
        throw ConfigError("increment block does not match Brownian dimension / step count");

    HistoryWindow window(mod.dim, grid.k1, grid.horizon);
    window.fill(xi);

    std::vector<AggregateEvaluator> drift_aggs, diff_aggs;
    drift_aggs.reserve(mod.drift_aggregates.size());
    diff_aggs.reserve(mod.diffusion_aggregates.size());
    for (const auto& spec : mod.drift_aggregates)
        drift_aggs.emplace_back(spec, window, opts.resync_every, opts.resync_tol);
    for (const auto& spec : mod.diffusion_aggregates)
        diff_aggs.emplace_back(spec, window, opts.resync_every, opts.resync_tol);

    double clamp_bound = 0.0;
    if (scheme == SchemeKind::TruncatedEm) {
        const double scale =
            opts.clamp_scale.value_or(2.0 * std::max(1.0, fading_norm(window, xi.fading_rate)));
        clamp_bound = scale * std::pow(grid.dt(), opts.clamp_exponent);
    }

    Trajectory traj;
    traj.grid = grid;
    traj.scheme = scheme;
    traj.states.resize(mod.dim, n_steps + 1);
    traj.regimes.resize(static_cast<std::size_t>(n_steps) + 1);

    Eigen::VectorXd x = window.newest();
    traj.states.col(0) = x;
    traj.regimes[0] = regimes.at(0);

    AggregateValues ydrift(mod.drift_aggregates.size()), zdiff(mod.diffusion_aggregates.size());
    const double dt = grid.dt();

    for (long j = 0; j < n_steps; ++j) {
        for (std::size_t i = 0; i < drift_aggs.size(); ++i) ydrift[i] = drift_aggs[i].value(window);
        for (std::size_t i = 0; i < diff_aggs.size(); ++i) zdiff[i] = diff_aggs[i].value(window);

        Eigen::VectorXd xa = x;
        if (scheme == SchemeKind::TruncatedEm) {
            xa = clamp_magnitude(x, clamp_bound);
            for (auto& v : ydrift) v = clamp_magnitude(v, clamp_bound);
            for (auto& v : zdiff) v = clamp_magnitude(v, clamp_bound);
        }

        const int regime = regimes.at(j);
        const double t = static_cast<double>(j) * dt;
        const Eigen::VectorXd f = eval_drift(mod, xa, ydrift, regime, t);
        const Eigen::MatrixXd g = eval_diffusion(mod, xa, zdiff, regime, t);

        x = x + f * dt + g * increments.col(j);

        if (!x.allFinite())
            throw NonFiniteError("state became non-finite at t=" + std::to_string(t + dt));
        const double mag = x.norm();
        if (mag > opts.guard)
            throw BlowUpError("trajectory magnitude " + std::to_string(mag) + " exceeded guard " +
                                  std::to_string(opts.guard) + " at t=" + std::to_string(t + dt),
                              t + dt, mag);

        for (auto& agg : drift_aggs) agg.on_push(window);
        for (auto& agg : diff_aggs) agg.on_push(window);
        window.push(x);

        traj.states.col(j + 1) = x;
        traj.regimes[static_cast<std::size_t>(j) + 1] = regimes.at(j + 1);
    }
    return traj;
}

} // namespace detail

inline Trajectory em_integrate(const CoefficientModel& mod, const InitialSegment& xi,
                               const GridSpec& grid, const RegimePath& regimes,
                               const Eigen::Ref<const Eigen::MatrixXd>& increments,
                               const EmOptions& opts = {}) {
    return detail::integrate_impl(mod, xi, grid, regimes, increments, opts, SchemeKind::Em);
}

/// Same recursion with the coefficient arguments (state and aggregates)
/// clamped to a dt-dependent magnitude, which keeps superlinear models from
/// amplifying rare large excursions.
inline Trajectory truncated_em_integrate(const CoefficientModel& mod, const InitialSegment& xi,
                                         const GridSpec& grid, const RegimePath& regimes,
                                         const Eigen::Ref<const Eigen::MatrixXd>& increments,
                                         const EmOptions& opts = {}) {
    return detail::integrate_impl(mod, xi, grid, regimes, increments, opts, SchemeKind::TruncatedEm);
}

inline SchemeKind resolve_scheme(const std::string& name, const CoefficientModel& mod) {
    if (name == "em") return SchemeKind::Em;
    if (name == "truncated-em") return SchemeKind::TruncatedEm;
    if (name == "auto")
        return mod.lipschitz == LipschitzClass::Superlinear ? SchemeKind::TruncatedEm : SchemeKind::Em;
    throw ConfigError("unknown scheme '" + name + "' (expected em | truncated-em | auto)");
}

inline Trajectory integrate(const ModelSetup& setup, const GridSpec& grid, const RegimePath& regimes,
                            const Eigen::Ref<const Eigen::MatrixXd>& increments, SchemeKind scheme,
                            const EmOptions& opts = {}) {
    return scheme == SchemeKind::Em
               ? em_integrate(setup.model, setup.initial, grid, regimes, increments, opts)
               : truncated_em_integrate(setup.model, setup.initial, grid, regimes, increments, opts);
}

} // namespace sfde
