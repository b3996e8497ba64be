#pragma once

#include <sfde/errors.hpp>
#include <sfde/integrator.hpp>
#include <sfde/model.hpp>
#include <sfde/noise.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Coupled Monte Carlo rate studies.  Every sample owns a deterministic
// counter-based stream, per-sample results are stored by index and reduced
// in index order, so estimates are bitwise independent of the parallelism
// degree and nested sample prefixes agree across runs.
// ---------------------------------------------------------------------------

struct Seeds {
    std::uint64_t master = 0;
    std::uint64_t noise = 0;
    std::uint64_t regime = 0;

    static Seeds from_master(std::uint64_t master) {
        return Seeds{master, splitmix64(master + 1), splitmix64(master + 2)};
    }
};

struct McOptions {
    long samples = 1000;
    int parallelism = 1;
    Seeds seeds = Seeds::from_master(42);
    SchemeKind scheme = SchemeKind::Em;
    EmOptions em;
    bool sup_error = false;       // measure max-over-grid instead of terminal-time error
    bool keep_per_sample = false; // retain the samples x params error matrix in the result
};

struct ErrorEstimate {
    double param = 0.0; // k for horizon studies, dt for step-size studies
    double mse = 0.0;
    double rmse = 0.0;
    double stderr_mse = 0.0;
    long samples = 0;
};

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
};

struct StudyResult {
    std::vector<ErrorEstimate> points;
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    bool fit_valid = false;
    std::string axis;     // "k": ln(mse) vs k;  "log2dt": log2(rmse) vs log2(dt)
    std::string model_id;
    std::string scheme;
    Seeds seeds;
    long samples = 0;
    int k1 = 0;
    double t_final = 0.0;
    Eigen::MatrixXd per_sample_sq_errors; // populated when McOptions::keep_per_sample
};

/// Ordinary least squares of ln(value) on the abscissa.
inline FitResult fit_loglinear(const std::vector<std::pair<double, double>>& points) {
    const std::size_t n = points.size();
    if (n < 3) throw DegenerateFitError("log-linear fit needs at least 3 points");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (points[i].first == points[j].first)
                throw DegenerateFitError("log-linear fit abscissas must be distinct");
    for (const auto& [x, v] : points)
        if (!(v > 0.0)) throw DegenerateFitError("log-linear fit values must be positive");

    double sx = 0.0, sy = 0.0;
    for (const auto& [x, v] : points) {
        sx += x;
        sy += std::log(v);
    }
    const double xbar = sx / static_cast<double>(n), ybar = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, v] : points) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (std::log(v) - ybar);
    }
    FitResult fit;
    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    double ss = 0.0;
    for (const auto& [x, v] : points) {
        const double r = std::log(v) - (fit.intercept + fit.slope * x);
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / static_cast<double>(n));
    return fit;
}

namespace detail {

/// Runs fn(sample) over [0, n) on up to `parallelism` threads.  Work items
/// write into caller-owned index-addressed storage; the first failure (by
/// sample index) is rethrown after all threads join.
template <class Fn>
void for_each_sample(long n, int parallelism, Fn&& fn) {
    parallelism = std::max(1, parallelism);
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n));
    if (parallelism == 1 || n <= 1) {
        for (long s = 0; s < n; ++s) fn(s); // exceptions propagate directly
        return;
    }
    std::atomic<long> next{0};
    auto worker = [&] {
        for (;;) {
            const long s = next.fetch_add(1);
            if (s >= n) return;
            try {
                fn(s);
            } catch (...) {
                failures[static_cast<std::size_t>(s)] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const int count = static_cast<int>(std::min<long>(parallelism, n));
    threads.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    for (auto& e : failures)
        if (e) std::rethrow_exception(e);
}

inline double path_error_sq(const Trajectory& a, const Trajectory& ref, bool sup_error, int level) {
    // `a` lives on a grid `level` times coarser than `ref`.
    if (!sup_error) return (a.terminal() - ref.terminal()).squaredNorm();
    double best = 0.0;
    for (long j = 0; j <= a.n_steps(); ++j)
        best = std::max(best, (a.states.col(j) - ref.states.col(j * level)).squaredNorm());
    return best;
}

/// Reduces per-sample squared errors (samples x params, index order) into
/// one estimate per parameter.
inline std::vector<ErrorEstimate> reduce_errors(const Eigen::MatrixXd& err,
                                                const std::vector<double>& params) {
    const long n = err.rows();
    std::vector<ErrorEstimate> out;
    out.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        double sum = 0.0;
        for (long s = 0; s < n; ++s) sum += err(s, static_cast<Eigen::Index>(p));
        const double mse = sum / static_cast<double>(n);
        double ss = 0.0;
        for (long s = 0; s < n; ++s) {
            const double d = err(s, static_cast<Eigen::Index>(p)) - mse;
            ss += d * d;
        }
        const double var = ss / static_cast<double>(n - 1);
        out.push_back(ErrorEstimate{params[p], mse, std::sqrt(mse),
                                    std::sqrt(var / static_cast<double>(n)), n});
    }
    return out;
}

} // namespace detail

/// Mean-square truncation error at the fixed step size as a function of the
/// window length k, against the k_ref run as reference; all runs per sample
/// share one Brownian path and one regime path.
inline StudyResult k_study(const ModelSetup& setup, const std::vector<int>& k_values, int k_ref,
                           int k1, double t_final, const McOptions& opts) {
    if (k_values.empty()) throw ConfigError("k study needs at least one k value");
    if (!std::is_sorted(k_values.begin(), k_values.end()) ||
        std::adjacent_find(k_values.begin(), k_values.end()) != k_values.end())
        throw ConfigError("k values must be strictly increasing");
    if (k_values.front() < 1) throw ConfigError("k values must be >= 1");
    if (!(static_cast<double>(k_values.back()) > t_final))
        throw ConfigError("largest k value must exceed t_final");
    if (k_ref <= k_values.back()) throw ConfigError("k_ref must exceed every k value");
    if (opts.samples < 2) throw ConfigError("studies need at least 2 samples");

    GridSpec base{k1, k_ref, t_final};
    base.validate();
    const long n_steps = base.n_steps();
    const NoiseSource noise(opts.seeds.noise, setup.model.brownian_dim, k1);
    const TransitionMatrix tm = transition_matrix(setup.generator, base.dt());

    Eigen::MatrixXd err(opts.samples, static_cast<Eigen::Index>(k_values.size()));
    detail::for_each_sample(opts.samples, opts.parallelism, [&](long s) {
        const Eigen::MatrixXd inc =
            noise.fine_increments(static_cast<std::uint32_t>(s), n_steps);
        const RegimePath regimes = sample_regime_path(
            tm, setup.initial_state, n_steps, RegimeUniforms(opts.seeds.regime, static_cast<std::uint32_t>(s)));

        auto run = [&](int k) {
            GridSpec grid{k1, k, t_final};
            try {
                return integrate(setup, grid, regimes, inc, opts.scheme, opts.em);
            } catch (BlowUpError& e) {
                e.sample = s;
                e.param = static_cast<double>(k);
                throw;
            }
        };
        const Trajectory ref = run(k_ref);
        for (std::size_t i = 0; i < k_values.size(); ++i)
            err(s, static_cast<Eigen::Index>(i)) =
                detail::path_error_sq(run(k_values[i]), ref, opts.sup_error, 1);
    });

    StudyResult res;
    std::vector<double> params(k_values.begin(), k_values.end());
    res.points = detail::reduce_errors(err, params);
    if (opts.keep_per_sample) res.per_sample_sq_errors = err;
    res.axis = "k";
    res.model_id = setup.id;
    res.scheme = scheme_name(opts.scheme);
    res.seeds = opts.seeds;
    res.samples = opts.samples;
    res.k1 = k1;
    res.t_final = t_final;

    std::vector<std::pair<double, double>> pts;
    bool positive = true;
    for (const auto& e : res.points) {
        positive = positive && e.mse > 0.0;
        pts.emplace_back(e.param, e.mse);
    }
    if (positive) {
        const FitResult fit = fit_loglinear(pts);
        res.slope = fit.slope;
        res.intercept = fit.intercept;
        res.residual = fit.residual;
        res.fit_valid = true;
    }
    return res;
}

/// Strong error at the fixed window length as a function of the step size,
/// against the dt_ref run as reference.  Increments are generated once per
/// sample on the finest grid and aggregated exactly; the regime path is
/// sampled on the finest grid and subsampled for coarse runs.  The reported
/// fit is log2(rmse) against log2(dt).
inline StudyResult dt_study(const ModelSetup& setup, const std::vector<int>& k1_values, int k1_ref,
                            int horizon_k, double t_final, const McOptions& opts) {
    if (k1_values.empty()) throw ConfigError("dt study needs at least one step size");
    for (std::size_t i = 1; i < k1_values.size(); ++i)
        if (k1_values[i] <= k1_values[i - 1])
            throw ConfigError("dt values must be strictly decreasing (k1 increasing)");
    if (k1_values.back() > k1_ref)
        throw ConfigError("dt_ref must be at least as fine as every dt value");
    for (int k1 : k1_values) {
        if (k1 < 1 || k1_ref % k1 != 0)
            throw NonDyadicError("dt=" + std::to_string(1.0 / k1) + " is not a multiple of dt_ref");
        const int level = k1_ref / k1;
        if ((level & (level - 1)) != 0)
            throw NonDyadicError("dt=" + std::to_string(1.0 / k1) + " is not a dyadic multiple of dt_ref");
    }
    if (opts.samples < 2) throw ConfigError("studies need at least 2 samples");

    GridSpec fine{k1_ref, horizon_k, t_final};
    fine.validate();
    const long n_fine = fine.n_steps();
    const NoiseSource noise(opts.seeds.noise, setup.model.brownian_dim, k1_ref);
    const TransitionMatrix tm = transition_matrix(setup.generator, fine.dt());

    Eigen::MatrixXd err(opts.samples, static_cast<Eigen::Index>(k1_values.size()));
    detail::for_each_sample(opts.samples, opts.parallelism, [&](long s) {
        const Eigen::MatrixXd inc_fine =
            noise.fine_increments(static_cast<std::uint32_t>(s), n_fine);
        const RegimePath regimes_fine = sample_regime_path(
            tm, setup.initial_state, n_fine, RegimeUniforms(opts.seeds.regime, static_cast<std::uint32_t>(s)));

        auto run = [&](int k1, const Eigen::MatrixXd& inc, const RegimePath& regimes) {
            GridSpec grid{k1, horizon_k, t_final};
            try {
                return integrate(setup, grid, regimes, inc, opts.scheme, opts.em);
            } catch (BlowUpError& e) {
                e.sample = s;
                e.param = 1.0 / static_cast<double>(k1);
                throw;
            }
        };
        const Trajectory ref = run(k1_ref, inc_fine, regimes_fine);
        for (std::size_t i = 0; i < k1_values.size(); ++i) {
            const int level = k1_ref / k1_values[i];
            const Eigen::MatrixXd inc = NoiseSource::coarse_increments(inc_fine, level);
            RegimePath sub;
            sub.state_count = regimes_fine.state_count;
            sub.states.resize(static_cast<std::size_t>(n_fine / level) + 1);
            for (std::size_t j = 0; j < sub.states.size(); ++j)
                sub.states[j] = regimes_fine.states[j * static_cast<std::size_t>(level)];
            err(s, static_cast<Eigen::Index>(i)) =
                detail::path_error_sq(run(k1_values[i], inc, sub), ref, opts.sup_error, level);
        }
    });

    StudyResult res;
    std::vector<double> params;
    for (int k1 : k1_values) params.push_back(1.0 / static_cast<double>(k1));
    res.points = detail::reduce_errors(err, params);
    if (opts.keep_per_sample) res.per_sample_sq_errors = err;
    res.axis = "log2dt";
    res.model_id = setup.id;
    res.scheme = scheme_name(opts.scheme);
    res.seeds = opts.seeds;
    res.samples = opts.samples;
    res.k1 = k1_ref;
    res.t_final = t_final;

    std::vector<std::pair<double, double>> pts;
    bool positive = true;
    for (const auto& e : res.points) {
        positive = positive && e.rmse > 0.0;
        pts.emplace_back(std::log2(e.param), e.rmse);
    }
    if (positive) {
        const FitResult fit = fit_loglinear(pts); // ln(rmse) on log2(dt)
        res.slope = fit.slope / std::numbers::ln2;
        res.intercept = fit.intercept / std::numbers::ln2;
        res.residual = fit.residual / std::numbers::ln2;
        res.fit_valid = true;
    }
    return res;
}

/// Empirical sup over the grid of the p-th moment; a boundedness smoke test.
inline double moment_probe(const ModelSetup& setup, const GridSpec& grid, long samples, double p,
                           const McOptions& opts) {
    if (p < 2.0) throw ConfigError("moment_probe requires p >= 2");
    grid.validate();
    const long n_steps = grid.n_steps();
    const NoiseSource noise(opts.seeds.noise, setup.model.brownian_dim, grid.k1);
    const TransitionMatrix tm = transition_matrix(setup.generator, grid.dt());

    Eigen::MatrixXd pow_abs(samples, n_steps + 1);
    detail::for_each_sample(samples, opts.parallelism, [&](long s) {
        const Eigen::MatrixXd inc = noise.fine_increments(static_cast<std::uint32_t>(s), n_steps);
        const RegimePath regimes = sample_regime_path(
            tm, setup.initial_state, n_steps, RegimeUniforms(opts.seeds.regime, static_cast<std::uint32_t>(s)));
        Trajectory traj;
        try {
            traj = integrate(setup, grid, regimes, inc, opts.scheme, opts.em);
        } catch (BlowUpError& e) {
            e.sample = s;
            throw;
        }
        for (long j = 0; j <= n_steps; ++j)
            pow_abs(s, j) = std::pow(traj.states.col(j).norm(), p);
    });

    double best = 0.0;
    for (long j = 0; j <= n_steps; ++j) {
        double sum = 0.0;
        for (long s = 0; s < samples; ++s) sum += pow_abs(s, j);
        best = std::max(best, sum / static_cast<double>(samples));
    }
    return best;
}

/// Terminal states of a plain ensemble (n x samples), deterministically
/// ordered; the workhorse behind moment checks and the simulate driver.
inline Eigen::MatrixXd terminal_ensemble(const ModelSetup& setup, const GridSpec& grid, long samples,
                                         const McOptions& opts) {
    grid.validate();
    const long n_steps = grid.n_steps();
    const NoiseSource noise(opts.seeds.noise, setup.model.brownian_dim, grid.k1);
    const TransitionMatrix tm = transition_matrix(setup.generator, grid.dt());

    Eigen::MatrixXd out(setup.model.dim, samples);
    detail::for_each_sample(samples, opts.parallelism, [&](long s) {
        const Eigen::MatrixXd inc = noise.fine_increments(static_cast<std::uint32_t>(s), n_steps);
        const RegimePath regimes = sample_regime_path(
            tm, setup.initial_state, n_steps, RegimeUniforms(opts.seeds.regime, static_cast<std::uint32_t>(s)));
        try {
            out.col(s) = integrate(setup, grid, regimes, inc, opts.scheme, opts.em).terminal();
        } catch (BlowUpError& e) {
            e.sample = s;
            throw;
        }
    });
    return out;
}

} // namespace sfde
