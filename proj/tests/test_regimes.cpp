#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sfde/noise.hpp>
#include <sfde/regimes.hpp>

#include "oracles.hpp"

#include <cmath>

using namespace sfde;

namespace {

RegimeGenerator two_state() {
    Eigen::MatrixXd g(2, 2);
    g << -1.0, 1.0, 2.0, -2.0;
    return RegimeGenerator(g);
}

struct FixedStream final : UniformStream {
    double v;
    explicit FixedStream(double value) : v(value) {}
    double uniform(std::uint64_t) const override { return v; }
};

struct CountingStream final : UniformStream {
    mutable std::uint64_t calls = 0;
    double uniform(std::uint64_t) const override {
        ++calls;
        return 0.5;
    }
};

} // namespace

TEST_CASE("generator invariants") {
    Eigen::MatrixXd bad_rowsum(2, 2);
    bad_rowsum << -1.0, 1.1, 2.0, -2.0;
    CHECK_THROWS_AS((void)RegimeGenerator(bad_rowsum), NonGeneratorError);

    Eigen::MatrixXd bad_offdiag(2, 2);
    bad_offdiag << 1.0, -1.0, 2.0, -2.0;
    CHECK_THROWS_AS((void)RegimeGenerator(bad_offdiag), NonGeneratorError);
}

TEST_CASE("transition matrix matches the 2x2 closed form") {
    const auto g = two_state();
    const double dt = std::log(2.0) / 3.0; // e^{-3 dt} = 1/2
    const auto tm = transition_matrix(g, dt);
    CHECK(std::abs(tm.P(0, 0) - 5.0 / 6.0) <= 1e-10);
    CHECK(std::abs(tm.P(0, 1) - 1.0 / 6.0) <= 1e-10);
    CHECK(std::abs(tm.P(1, 0) - 1.0 / 3.0) <= 1e-10);
    CHECK(std::abs(tm.P(1, 1) - 2.0 / 3.0) <= 1e-10);

    for (double step : {1e-6, 1e-3, 0.05, 0.3, 1.0}) {
        const auto p = transition_matrix(g, step).P;
        const auto ref = oracle::two_state_transition(1.0, 2.0, step);
        CHECK((p - ref).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("transition matrix is row-stochastic and a semigroup") {
    const auto g = two_state();
    for (double dt : {1e-6, 1e-4, 1e-2, 0.25, 1.0}) {
        const auto tm = transition_matrix(g, dt);
        for (Eigen::Index i = 0; i < 2; ++i) {
            CHECK(std::abs(tm.P.row(i).sum() - 1.0) <= 1e-12);
            CHECK(tm.P.row(i).minCoeff() >= 0.0);
        }
        const auto doubled = transition_matrix(g, 2.0 * dt);
        CHECK((doubled.P - tm.P * tm.P).cwiseAbs().maxCoeff() <= 1e-10);
    }
    // dt -> 0 limit
    CHECK((transition_matrix(g, 1e-12).P - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("matrix exponential handles larger norms via squaring") {
    Eigen::MatrixXd g(2, 2);
    g << -40.0, 40.0, 15.0, -15.0;
    const auto p = transition_matrix(RegimeGenerator(g), 1.0).P;
    const auto ref = oracle::two_state_transition(40.0, 15.0, 1.0);
    CHECK((p - ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("path sampling basics") {
    const auto frozen = RegimeGenerator(Eigen::MatrixXd::Zero(3, 3));
    const auto tm = transition_matrix(frozen, 0.1);

    const auto constant = sample_regime_path(tm, 2, 100, FixedStream(0.7));
    CHECK(constant.states.size() == 101);
    for (int s : constant.states) CHECK(s == 2);

    const auto trivial = sample_regime_path(tm, 3, 0, FixedStream(0.1));
    REQUIRE(trivial.states.size() == 1);
    CHECK(trivial.states[0] == 3);

    CHECK_THROWS_AS((void)sample_regime_path(tm, 0, 1, FixedStream(0.5)), ConfigError);
    CHECK_THROWS_AS((void)sample_regime_path(tm, 4, 1, FixedStream(0.5)), ConfigError);

    CountingStream counter;
    (void)sample_regime_path(tm, 1, 57, counter);
    CHECK(counter.calls == 57); // exactly one variate per step, point mass or not
}

TEST_CASE("stationary distribution") {
    // hand solve for [[-1,1],[2,-2]]: pi1*1 = pi2*2, pi1+pi2 = 1
    const auto pi = stationary_distribution(two_state());
    CHECK(pi(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(pi(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK((two_state().rates().transpose() * pi).cwiseAbs().maxCoeff() <= 1e-12);

    const auto single = stationary_distribution(RegimeGenerator(Eigen::MatrixXd::Zero(1, 1)));
    CHECK(single(0) == doctest::Approx(1.0));

    Eigen::MatrixXd sym(2, 2);
    sym << -1.0, 1.0, 1.0, -1.0;
    const auto half = stationary_distribution(RegimeGenerator(sym));
    CHECK(half(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(half(1) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS((void)stationary_distribution(RegimeGenerator(Eigen::MatrixXd::Zero(2, 2))),
                    ReducibleError);
}

TEST_CASE("long-run occupation matches the stationary solve") {
    const auto g = two_state();
    const auto tm = transition_matrix(g, 0.01);
    const long steps = 1000000;
    const auto path = sample_regime_path(tm, 1, steps, RegimeUniforms(20240817, 0));

    long in_state1 = 0;
    for (int s : path.states) in_state1 += (s == 1);
    const double frac = static_cast<double>(in_state1) / static_cast<double>(path.states.size());
    CHECK(std::abs(frac - 2.0 / 3.0) <= 0.005);
}
