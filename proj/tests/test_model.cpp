#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sfde/model.hpp>

#include <cmath>

using namespace sfde;

namespace {
Eigen::VectorXd scalar(double v) {
    Eigen::VectorXd x(1);
    x(0) = v;
    return x;
}
} // namespace

TEST_CASE("volatility model coefficients") {
    const auto s = make_volatility_model();
    CHECK(s.model.dim == 1);
    CHECK(s.model.brownian_dim == 1);
    CHECK(s.fading_rate == doctest::Approx(0.2));
    CHECK(s.generator.states() == 2);
    CHECK(s.initial_state == 1);
    CHECK(s.model.lipschitz == LipschitzClass::Superlinear);
    REQUIRE(s.model.diffusion_aggregates.size() == 1);
    CHECK(s.model.diffusion_aggregates[0].measure.kind() == MeasureKind::ExponentialDensity);
    CHECK(s.model.diffusion_aggregates[0].measure.rate() == 1.0);
    CHECK(s.model.drift_aggregates.empty());

    CHECK(eval_drift(s.model, scalar(0.0), {}, 1, 3.7)(0) == doctest::Approx(1.0));
    CHECK(eval_drift(s.model, scalar(1.0), {}, 2, 0.0)(0) == doctest::Approx(0.0));
    CHECK(eval_drift(s.model, scalar(2.0), {}, 1, 0.0)(0) == doctest::Approx(1.0 + 8.0 - 32.0));

    const AggregateValues agg = {scalar(0.73)};
    CHECK(eval_diffusion(s.model, scalar(5.0), agg, 1, 0.0)(0, 0) == doctest::Approx(0.73));
    CHECK(eval_diffusion(s.model, scalar(5.0), agg, 2, 0.0)(0, 0) == doctest::Approx(0.365));

    // initial history e^u
    CHECK(s.initial.eval(-1.0)(0) == doctest::Approx(std::exp(-1.0)));
    CHECK(s.initial.eval(0.0)(0) == doctest::Approx(1.0));

    CHECK(s.moment_margin() == doctest::Approx(0.8));
}

TEST_CASE("volatility drift satisfies the one-sided bound") {
    // x*F(x) <= C(1+x^2) - c|x|^4 with C=4, c=3.9 on a grid
    const auto s = make_volatility_model();
    for (int regime : {1, 2})
        for (double x = -10.0; x <= 10.0; x += 0.01) {
            const double xf = x * eval_drift(s.model, scalar(x), {}, regime, 0.0)(0);
            CHECK(xf <= 4.0 * (1.0 + x * x) - 3.9 * x * x * x * x + 1e-9);
        }
}

TEST_CASE("predator-prey model coefficients") {
    const auto s = make_lotka_volterra_model();
    CHECK(s.model.dim == 2);
    CHECK(s.model.brownian_dim == 2);
    REQUIRE(s.model.drift_aggregates.size() == 1);
    CHECK(s.model.drift_aggregates[0].transform == Transform::Identity);

    Eigen::VectorXd x(2);
    x << 1.0, 1.0;
    Eigen::VectorXd psi(2);
    psi << 1.0, 0.6; // only the first component enters the drift
    const auto f = eval_drift(s.model, x, {psi}, 1, 0.0);
    CHECK(f(0) == doctest::Approx(-0.5));
    CHECK(f(1) == doctest::Approx(-0.42));

    // time dependence through sin terms
    const auto f_later = eval_drift(s.model, x, {psi}, 1, M_PI / 2.0);
    CHECK(f_later(0) == doctest::Approx(1.0 * (0.6 - 0.8 - 0.2)));

    Eigen::VectorXd y(2);
    y << 2.0, 3.0;
    const auto g = eval_diffusion(s.model, y, {}, 1, 0.0);
    CHECK(g(0, 0) == doctest::Approx(1.0));
    CHECK(g(1, 1) == doctest::Approx(1.5));
    CHECK(g(0, 1) == 0.0);
    CHECK(g(1, 0) == 0.0);

    CHECK(s.initial.eval(0.0)(0) == doctest::Approx(0.8));
    CHECK(s.initial.eval(-2.0)(0) == doctest::Approx(0.8 * std::exp(-2.0)));
    CHECK(s.initial.eval(-2.0)(1) == doctest::Approx(0.6));
}

TEST_CASE("linear benchmark model") {
    LinearTestParams p;
    p.a = 0.5;
    p.sigma = 0.3;
    p.c = 0.0;
    const auto s = make_linear_test_model(p);
    CHECK(s.model.lipschitz == LipschitzClass::GlobalLipschitz);

    // with c=0 the coefficients ignore the aggregate input entirely
    const auto f1 = eval_drift(s.model, scalar(2.0), {scalar(0.0)}, 1, 0.0);
    const auto f2 = eval_drift(s.model, scalar(2.0), {scalar(123.0)}, 1, 0.0);
    CHECK(f1(0) == f2(0));
    CHECK(f1(0) == doctest::Approx(1.0));
    CHECK(eval_diffusion(s.model, scalar(2.0), {}, 1, 0.0)(0, 0) == doctest::Approx(0.6));

    LinearTestParams pc = p;
    pc.c = 0.1;
    const auto sc = make_linear_test_model(pc);
    CHECK(eval_drift(sc.model, scalar(2.0), {scalar(10.0)}, 1, 0.0)(0) == doctest::Approx(2.0));
}

TEST_CASE("evaluation is deterministic") {
    const auto s = make_volatility_model();
    const auto a = eval_drift(s.model, scalar(1.234567), {}, 2, 9.87);
    const auto b = eval_drift(s.model, scalar(1.234567), {}, 2, 9.87);
    CHECK(a(0) == b(0)); // bit identical
}

TEST_CASE("non-finite coefficient values are flagged") {
    CoefficientModel m;
    m.dim = 1;
    m.brownian_dim = 1;
    m.drift = [](const Eigen::VectorXd& x, const AggregateValues&, int, double) {
        return Eigen::VectorXd(scalar(1.0 / (x(0) - x(0)))); // inf
    };
    m.diffusion = [](const Eigen::VectorXd&, const AggregateValues&, int, double) {
        return Eigen::MatrixXd::Zero(1, 1).eval();
    };
    CHECK_THROWS_AS((void)eval_drift(m, scalar(1.0), {}, 1, 0.0), NonFiniteError);

    // finiteness at the origin (coefficient boundedness sanity)
    const auto vol = make_volatility_model();
    for (double t : {0.0, 1.0, 100.0})
        for (int i : {1, 2}) CHECK(std::isfinite(eval_drift(vol.model, scalar(0.0), {}, i, t)(0)));
}
