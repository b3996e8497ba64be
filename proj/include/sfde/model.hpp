#pragma once

#include <sfde/errors.hpp>
#include <sfde/history.hpp>
#include <sfde/measures.hpp>
#include <sfde/regimes.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Structured coefficient form: drift F(x, y, i, t) and diffusion G(x, z, i, t)
// where y/z are the declared delay aggregates of the path history, i is the
// 1-based regime and t the current time.  Aggregates are declared per model
// as (measure, transform) pairs and evaluated by the integrator.
// ---------------------------------------------------------------------------

enum class LipschitzClass { GlobalLipschitz, Superlinear };

using AggregateValues = std::vector<Eigen::VectorXd>;

struct CoefficientModel {
    int dim = 1;           // state dimension n
    int brownian_dim = 1;  // driving Brownian dimension m
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const AggregateValues&, int, double)> drift;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const AggregateValues&, int, double)> diffusion;
    std::vector<DelayAggregateSpec> drift_aggregates;
    std::vector<DelayAggregateSpec> diffusion_aggregates;
    LipschitzClass lipschitz = LipschitzClass::GlobalLipschitz;
};

inline Eigen::VectorXd eval_drift(const CoefficientModel& mod, const Eigen::VectorXd& x,
                                  const AggregateValues& aggs, int regime, double t) {
    if (aggs.size() != mod.drift_aggregates.size())
        throw ConfigError("drift aggregate count mismatch");
    Eigen::VectorXd f = mod.drift(x, aggs, regime, t);
    if (!f.allFinite()) throw NonFiniteError("drift evaluated to a non-finite value");
    return f;
}

inline Eigen::MatrixXd eval_diffusion(const CoefficientModel& mod, const Eigen::VectorXd& x,
                                      const AggregateValues& aggs, int regime, double t) {
    if (aggs.size() != mod.diffusion_aggregates.size())
        throw ConfigError("diffusion aggregate count mismatch");
    Eigen::MatrixXd g = mod.diffusion(x, aggs, regime, t);
    if (!g.allFinite()) throw NonFiniteError("diffusion evaluated to a non-finite value");
    return g;
}

/// Everything a run needs besides the grid: coefficients, the switching
/// generator with its initial state, the initial history and the phase
/// space fading rate.
struct ModelSetup {
    std::string id;
    CoefficientModel model;
    RegimeGenerator generator{Eigen::MatrixXd::Zero(1, 1)};
    int initial_state = 1;
    InitialSegment initial;
    double fading_rate = 0.2;

    /// Smallest admissible moment-boundary margin over the declared
    /// aggregate measures; must stay positive for the fading norm and the
    /// truncation-rate theory to make sense.
    double moment_margin() const {
        double margin = std::numeric_limits<double>::infinity();
        for (const auto* list : {&model.drift_aggregates, &model.diffusion_aggregates})
            for (const auto& spec : *list)
                margin = std::min(margin, moment_boundary(spec.measure) - fading_rate);
        return margin;
    }
};

// ---------------------------------------------------------------------------
// Built-in models.
// ---------------------------------------------------------------------------

/// Scalar stochastic volatility equation with two regimes: cubic
/// mean-reverting drift per regime and a diffusion driven by the
/// exponentially weighted average of the squared path.
inline ModelSetup make_volatility_model() {
    ModelSetup s;
    s.id = "volatility54";
    s.fading_rate = 0.2;

    CoefficientModel m;
    m.dim = 1;
    m.brownian_dim = 1;
    m.drift = [](const Eigen::VectorXd& x, const AggregateValues&, int regime, double) {
        const double v = x(0);
        Eigen::VectorXd f(1);
        f(0) = (regime == 1) ? 1.0 + 4.0 * v - 4.0 * v * v * v
                             : 2.0 + 3.0 * v - 5.0 * v * v * v;
        return f;
    };
    m.diffusion = [](const Eigen::VectorXd&, const AggregateValues& z, int regime, double) {
        Eigen::MatrixXd g(1, 1);
        g(0, 0) = (regime == 1) ? z[0](0) : 0.5 * z[0](0);
        return g;
    };
    m.diffusion_aggregates = {DelayAggregateSpec{DelayMeasure::exponential(1.0), Transform::Square}};
    m.lipschitz = LipschitzClass::Superlinear;
    s.model = std::move(m);

    Eigen::MatrixXd gamma(2, 2);
    gamma << -1.0, 1.0, 2.0, -2.0;
    s.generator = RegimeGenerator(gamma);
    s.initial_state = 1;

    s.initial.components = {ScalarSegment::exp_scaled(1.0, 1.0)};
    s.initial.fading_rate = s.fading_rate;
    s.initial.holder_exponent = 1.0;
    return s;
}

/// Two-species stochastic Lotka-Volterra system with periodic growth rates
/// and a distributed-delay interaction of the second species with the
/// exponentially weighted past of the first.
inline ModelSetup make_lotka_volterra_model() {
    ModelSetup s;
    s.id = "lotka55";
    s.fading_rate = 0.2;

    CoefficientModel m;
    m.dim = 2;
    m.brownian_dim = 2;
    m.drift = [](const Eigen::VectorXd& x, const AggregateValues& y, int, double t) {
        Eigen::VectorXd f(2);
        f(0) = x(0) * ((0.5 + 0.1 * std::sin(t)) - 0.8 * x(0) - 0.2 * x(1));
        f(1) = x(1) * ((0.3 + 0.2 * std::sin(2.0 * t)) - 0.6 * x(1) - 0.12 * y[0](0));
        return f;
    };
    m.diffusion = [](const Eigen::VectorXd& x, const AggregateValues&, int, double) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
        g(0, 0) = 0.5 * x(0);
        g(1, 1) = 0.5 * x(1);
        return g;
    };
    m.drift_aggregates = {DelayAggregateSpec{DelayMeasure::exponential(1.0), Transform::Identity}};
    m.lipschitz = LipschitzClass::Superlinear;
    s.model = std::move(m);

    s.generator = RegimeGenerator(Eigen::MatrixXd::Zero(1, 1)); // no switching term
    s.initial_state = 1;

    // The second species carries no delayed history; its segment is held at
    // the initial value for buffer-filling purposes only.
    s.initial.components = {ScalarSegment::exp_scaled(0.8, 1.0), ScalarSegment::constant(0.6)};
    s.initial.fading_rate = s.fading_rate;
    s.initial.holder_exponent = 1.0;
    return s;
}

struct LinearTestParams {
    double a = 0.5;
    double sigma = 0.3;
    double c = 0.0;
    DelayMeasure aggregate = DelayMeasure::dirac_at_zero();
    double x0 = 1.0;
};

/// Scalar linear benchmark dx = (a x + c psi) dt + sigma x dB, reducing to
/// geometric Brownian motion for c = 0; used for exact-moment and rate
/// checks.
inline ModelSetup make_linear_test_model(const LinearTestParams& p = {}) {
    ModelSetup s;
    s.id = "linear_test";
    s.fading_rate = 0.2;

    CoefficientModel m;
    m.dim = 1;
    m.brownian_dim = 1;
    const double a = p.a, sigma = p.sigma, c = p.c;
    m.drift = [a, c](const Eigen::VectorXd& x, const AggregateValues& y, int, double) {
        Eigen::VectorXd f(1);
        f(0) = a * x(0) + c * y[0](0);
        return f;
    };
    m.diffusion = [sigma](const Eigen::VectorXd& x, const AggregateValues&, int, double) {
        Eigen::MatrixXd g(1, 1);
        g(0, 0) = sigma * x(0);
        return g;
    };
    m.drift_aggregates = {DelayAggregateSpec{p.aggregate, Transform::Identity}};
    m.lipschitz = LipschitzClass::GlobalLipschitz;
    s.model = std::move(m);

    s.generator = RegimeGenerator(Eigen::MatrixXd::Zero(1, 1));
    s.initial_state = 1;
    s.initial.components = {ScalarSegment::constant(p.x0)};
    s.initial.fading_rate = s.fading_rate;
    return s;
}

} // namespace sfde
