#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sfde/integrator.hpp>
#include <sfde/mc.hpp>
#include <sfde/model.hpp>
#include <sfde/noise.hpp>

#include "oracles.hpp"

#include <cmath>

using namespace sfde;

namespace {

RegimePath constant_path(long steps, int state = 1, int count = 1) {
    RegimePath p;
    p.state_count = count;
    p.states.assign(static_cast<std::size_t>(steps) + 1, state);
    return p;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

} // namespace

TEST_CASE("pure decay reproduces (1-dt)^N") {
    LinearTestParams p;
    p.a = -1.0;
    p.sigma = 0.0;
    const auto s = make_linear_test_model(p);
    GridSpec grid{64, 1, 1.0};
    const long n = grid.n_steps();
    const auto traj = em_integrate(s.model, s.initial, grid, constant_path(n),
                                   Eigen::MatrixXd::Zero(1, n));
    double expected = 1.0;
    for (long j = 0; j < n; ++j) expected *= (1.0 - grid.dt());
    CHECK(std::abs(traj.terminal()(0) - expected) <= 1e-12);
    CHECK(std::abs(traj.terminal()(0) - std::pow(1.0 - grid.dt(), static_cast<double>(n))) <= 1e-12);
}

TEST_CASE("zero coefficients freeze the trajectory") {
    LinearTestParams p;
    p.a = 0.0;
    p.sigma = 0.0;
    p.x0 = 0.375;
    const auto s = make_linear_test_model(p);
    GridSpec grid{16, 1, 2.0};
    const long n = grid.n_steps();
    const NoiseSource noise(11, 1, 16);
    const auto traj =
        em_integrate(s.model, s.initial, grid, constant_path(n), noise.fine_increments(0, n));
    for (long j = 0; j <= n; ++j) CHECK(traj.states(0, j) == 0.375);
}

TEST_CASE("geometric Brownian motion hits its exact mean") {
    const auto s = make_linear_test_model({}); // a=0.5, sigma=0.3, c=0
    GridSpec grid{256, 1, 1.0};
    McOptions opts;
    opts.samples = 4000;
    opts.seeds = Seeds::from_master(7);
    opts.scheme = SchemeKind::Em;
    const Eigen::MatrixXd ends = terminal_ensemble(s, grid, opts.samples, opts);

    const double mean = ends.row(0).sum() / static_cast<double>(opts.samples);
    double var = 0.0;
    for (Eigen::Index j = 0; j < ends.cols(); ++j) var += (ends(0, j) - mean) * (ends(0, j) - mean);
    var /= static_cast<double>(opts.samples - 1);
    const double se = std::sqrt(var / static_cast<double>(opts.samples));
    CHECK(std::abs(mean - std::exp(0.5)) <= 3.0 * se);
}

TEST_CASE("clamped scheme with a slack bound is bit-identical to the plain one") {
    const auto s = make_linear_test_model({}); // globally Lipschitz
    GridSpec grid{32, 1, 1.0};
    const long n = grid.n_steps();
    EmOptions wide;
    wide.clamp_scale = 1e12;
    for (std::uint32_t sample = 0; sample < 100; ++sample) {
        const NoiseSource noise(1000 + sample, 1, 32);
        const auto inc = noise.fine_increments(sample, n);
        const auto plain = em_integrate(s.model, s.initial, grid, constant_path(n), inc);
        const auto clamped = truncated_em_integrate(s.model, s.initial, grid, constant_path(n), inc, wide);
        CHECK(bitwise_equal(plain.states, clamped.states));
    }
}

TEST_CASE("clamp bound scales like dt^(-1/4)") {
    // h(dt) = H * dt^{-1/4}: halving dt multiplies the bound by 2^{1/4}
    const double h1 = 2.0 * std::pow(1.0 / 64.0, -0.25);
    const double h2 = 2.0 * std::pow(1.0 / 128.0, -0.25);
    CHECK(h2 / h1 == doctest::Approx(std::pow(2.0, 0.25)).epsilon(1e-12));
}

TEST_CASE("delay-free switching model matches a standalone EM recursion") {
    // two regimes, coefficients use only (x, i, t); windows play no role
    CoefficientModel m;
    m.dim = 1;
    m.brownian_dim = 1;
    m.drift = [](const Eigen::VectorXd& x, const AggregateValues&, int i, double t) {
        Eigen::VectorXd f(1);
        f(0) = (i == 1 ? -0.8 : 0.4) * x(0) + 0.1 * std::sin(t);
        return f;
    };
    m.diffusion = [](const Eigen::VectorXd& x, const AggregateValues&, int i, double) {
        Eigen::MatrixXd g(1, 1);
        g(0, 0) = (i == 1 ? 0.2 : 0.35) * x(0);
        return g;
    };
    InitialSegment xi;
    xi.components = {ScalarSegment::constant(1.0)};

    GridSpec grid{32, 1, 3.0};
    const long n = grid.n_steps();
    const NoiseSource noise(2718, 1, 32);
    const auto inc = noise.fine_increments(0, n);

    Eigen::MatrixXd gamma(2, 2);
    gamma << -1.0, 1.0, 2.0, -2.0;
    const auto tm = transition_matrix(RegimeGenerator(gamma), grid.dt());
    const auto regimes = sample_regime_path(tm, 1, n, RegimeUniforms(99, 0));

    const auto traj = em_integrate(m, xi, grid, regimes, inc);

    const auto expected = oracle::plain_em(
        Eigen::VectorXd::Constant(1, 1.0),
        [](const Eigen::VectorXd& x, int i, double t) {
            Eigen::VectorXd f(1);
            f(0) = (i == 1 ? -0.8 : 0.4) * x(0) + 0.1 * std::sin(t);
            return f;
        },
        [](const Eigen::VectorXd& x, int i, double) {
            Eigen::MatrixXd g(1, 1);
            g(0, 0) = (i == 1 ? 0.2 : 0.35) * x(0);
            return g;
        },
        regimes.states, inc, grid.dt());

    for (long j = 0; j <= n; ++j) CHECK(traj.states(0, j) == expected[static_cast<std::size_t>(j)](0));
}

TEST_CASE("regime reseeding changes trajectories only through the regime argument") {
    GridSpec grid{32, 2, 1.0};
    const long n = grid.n_steps();
    const NoiseSource noise(314, 1, 32);
    const auto inc = noise.fine_increments(0, n);

    Eigen::MatrixXd gamma(2, 2);
    gamma << -1.0, 1.0, 2.0, -2.0;
    const auto tm = transition_matrix(RegimeGenerator(gamma), grid.dt());
    const auto regimes_a = sample_regime_path(tm, 1, n, RegimeUniforms(1, 0));
    const auto regimes_b = sample_regime_path(tm, 1, n, RegimeUniforms(2, 0));
    REQUIRE(regimes_a.states != regimes_b.states);

    // regime-blind model: identical trajectories
    const auto lin = make_linear_test_model({});
    const auto ta = em_integrate(lin.model, lin.initial, grid, regimes_a, inc);
    const auto tb = em_integrate(lin.model, lin.initial, grid, regimes_b, inc);
    CHECK(bitwise_equal(ta.states, tb.states));

    // regime-sensitive model: they differ
    const auto vol = make_volatility_model();
    const auto va = truncated_em_integrate(vol.model, vol.initial, grid, regimes_a, inc);
    const auto vb = truncated_em_integrate(vol.model, vol.initial, grid, regimes_b, inc);
    CHECK_FALSE(bitwise_equal(va.states, vb.states));
}

TEST_CASE("window truncation is a no-op under point-mass aggregates") {
    LinearTestParams p;
    p.c = 0.1; // drift reads the aggregate
    p.aggregate = DelayMeasure::dirac_at_zero();
    const auto s = make_linear_test_model(p);

    const int k1 = 32;
    GridSpec base{k1, 1, 1.0};
    const long n = base.n_steps();
    const NoiseSource noise(4242, 1, k1);
    const auto inc = noise.fine_increments(0, n);

    const auto t1 = em_integrate(s.model, s.initial, GridSpec{k1, 1, 1.0}, constant_path(n), inc);
    const auto t2 = em_integrate(s.model, s.initial, GridSpec{k1, 2, 1.0}, constant_path(n), inc);
    const auto t5 = em_integrate(s.model, s.initial, GridSpec{k1, 5, 1.0}, constant_path(n), inc);
    CHECK(bitwise_equal(t1.states, t2.states));
    CHECK(bitwise_equal(t1.states, t5.states));
}

TEST_CASE("guard turns runaway trajectories into BlowUpError") {
    CoefficientModel m;
    m.dim = 1;
    m.brownian_dim = 1;
    m.drift = [](const Eigen::VectorXd& x, const AggregateValues&, int, double) {
        Eigen::VectorXd f(1);
        f(0) = x(0) * x(0) * x(0); // explosive
        return f;
    };
    m.diffusion = [](const Eigen::VectorXd&, const AggregateValues&, int, double) {
        return Eigen::MatrixXd::Zero(1, 1).eval();
    };
    InitialSegment xi;
    xi.components = {ScalarSegment::constant(3.0)};
    GridSpec grid{4, 1, 5.0};
    const long n = grid.n_steps();
    EmOptions opts;
    opts.guard = 1e6;
    try {
        (void)em_integrate(m, xi, grid, constant_path(n), Eigen::MatrixXd::Zero(1, n), opts);
        FAIL("expected BlowUpError");
    } catch (const BlowUpError& e) {
        CHECK(e.magnitude > 1e6);
        CHECK(e.time > 0.0);
    }
}

TEST_CASE("volatility model under the clamped scheme stays finite") {
    const auto s = make_volatility_model();
    GridSpec grid{64, 4, 2.0};
    const long n = grid.n_steps();
    const auto tm = transition_matrix(s.generator, grid.dt());
    for (std::uint32_t sample = 0; sample < 50; ++sample) {
        const NoiseSource noise(Seeds::from_master(5).noise, 1, 64);
        const auto inc = noise.fine_increments(sample, n);
        const auto regimes =
            sample_regime_path(tm, s.initial_state, n, RegimeUniforms(Seeds::from_master(5).regime, sample));
        const auto traj = truncated_em_integrate(s.model, s.initial, grid, regimes, inc);
        CHECK(traj.states.allFinite());
    }
}

TEST_CASE("grid validation") {
    CHECK_THROWS_AS((GridSpec{0, 1, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{4, 0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{4, 1, 0.3}.n_steps()), ConfigError); // 1.2 steps
    CHECK(GridSpec{4, 1, 0.5}.n_steps() == 2);
    CHECK(GridSpec{3, 2, 7.0}.n_steps() == 21);
}
