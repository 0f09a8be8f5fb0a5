#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "divkf/models.hpp"

using namespace divkf;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent central-difference Jacobian used as the reference here; kept
// separate from the library's fallback on purpose.
Matrix fd_reference(const MeasurementModel& model, const Vector& x, double step) {
    const int p = model.measurement_dim();
    const int d = static_cast<int>(x.size());
    Matrix J(p, d);
    for (int j = 0; j < d; ++j) {
        Vector lo = x, hi = x;
        lo(j) -= step;
        hi(j) += step;
        J.col(j) = (model.h(hi) - model.h(lo)) / (2.0 * step);
    }
    return J;
}

} // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
    CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(2.0 * kPi) == doctest::Approx(0.0));
    CHECK(wrap_angle(-0.5) == doctest::Approx(-0.5));
    for (int k = -2; k <= 2; ++k) {
        const double w = wrap_angle(1.3 + 2.0 * kPi * k);
        CHECK(w == doctest::Approx(1.3).epsilon(1e-12));
        CHECK(w > -kPi);
        CHECK(w <= kPi);
    }
}

TEST_CASE("cv_dynamics matches the discretized white-noise-acceleration model") {
    const LinearDynamics dyn = cv_dynamics(1.0, 1e-2);

    SUBCASE("transition blocks") {
        Matrix F2(2, 2);
        F2 << 1, 1, 0, 1;
        CHECK((dyn.F.block<2, 2>(0, 0) - F2).norm() == doctest::Approx(0.0));
        CHECK((dyn.F.block<2, 2>(2, 2) - F2).norm() == doctest::Approx(0.0));
        CHECK(dyn.F.block<2, 2>(0, 2).norm() == doctest::Approx(0.0));
    }

    SUBCASE("process noise blocks") {
        Matrix Q2(2, 2);
        Q2 << 0.0025, 0.005, 0.005, 0.01;
        CHECK((dyn.Q.matrix().block<2, 2>(0, 0) - Q2).norm() < 1e-10);
        CHECK((dyn.Q.matrix().block<2, 2>(2, 2) - Q2).norm() < 1e-10);
    }

    SUBCASE("unit-velocity kinematics") {
        Vector x(4);
        x << 0, 1, 0, 2;
        Vector next = dyn.F * x;
        CHECK(next(0) == doctest::Approx(1.0));
        CHECK(next(1) == doctest::Approx(1.0));
        CHECK(next(2) == doctest::Approx(2.0));
        CHECK(next(3) == doctest::Approx(2.0));
    }
}

TEST_CASE("cv_dynamics Q is PSD across scales") {
    for (double sigma : {1e-3, 1e-2, 0.1, 1.0, 10.0}) {
        for (double dt : {0.1, 0.5, 1.0, 2.0}) {
            const LinearDynamics dyn = cv_dynamics(dt, sigma);
            Eigen::SelfAdjointEigenSolver<Matrix> es(dyn.Q.matrix());
            CHECK(es.eigenvalues().minCoeff() >= -1e-12);
        }
    }
    CHECK_THROWS_AS(cv_dynamics(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(cv_dynamics(1.0, -1.0), DomainError);
}

TEST_CASE("radar_model geometry and noise") {
    const MeasurementModel radar = radar_model(0.1, 0.01);

    SUBCASE("45-degree geometry") {
        Vector x(4);
        x << 1000, 10, 1000, 10;
        const Vector y = radar.h(x);
        CHECK(y(0) == doctest::Approx(1414.213562373095).epsilon(1e-12));
        CHECK(y(1) == doctest::Approx(0.7853981633974483).epsilon(1e-12));
    }

    SUBCASE("noise covariance") {
        CHECK(radar.noise().matrix()(0, 0) == doctest::Approx(0.1));
        CHECK(radar.noise().matrix()(1, 1) == doctest::Approx(0.01));
        CHECK(radar.noise().matrix()(0, 1) == doctest::Approx(0.0));
        CHECK(radar.wraps(1));
        CHECK_FALSE(radar.wraps(0));
    }

    SUBCASE("Jacobian against central differences at [3,0,4,0]") {
        Vector x(4);
        x << 3, 0, 4, 0;
        const Matrix diff = radar.jacobian(x) - fd_reference(radar, x, 1e-5);
        CHECK(diff.cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("singular at the origin") {
        Vector x = Vector::Zero(4);
        CHECK_THROWS_AS(radar.h(x), SingularPoint);
        CHECK_THROWS_AS(radar.jacobian(x), SingularPoint);
    }

    SUBCASE("quadrant coverage") {
        Vector x(4);
        x << -5, 0, -5, 0;
        CHECK(radar.h(x)(1) == doctest::Approx(-3.0 * kPi / 4.0));
    }
}

TEST_CASE("radar residual wrapping is 2-pi periodic") {
    const MeasurementModel radar = radar_model(0.1, 0.01);
    const double theta = 2.9;
    const double theta_ref = -3.0;
    Vector hx(2);
    hx << 100.0, theta_ref;
    Vector y(2);
    y << 101.0, theta;
    const Vector base = radar.residual(y, hx);
    for (int k = -2; k <= 2; ++k) {
        Vector yk = y;
        yk(1) = theta + 2.0 * kPi * k;
        const Vector r = radar.residual(yk, hx);
        CHECK(r(1) == doctest::Approx(base(1)).epsilon(1e-12));
        CHECK(r(0) == doctest::Approx(1.0));
    }
    CHECK(base(1) == doctest::Approx(wrap_angle(theta - theta_ref)));
}

TEST_CASE("sensor_model ranges and noise") {
    std::vector<Eigen::Vector2d> pos = {
        {0.0, 0.0}, {100.0, 0.0}, {0.0, 100.0}, {50.0, 50.0}};
    const SensorLayout layout(pos, 3);
    const MeasurementModel model = sensor_model(layout, {0, 1, 2}, 20.0);

    SUBCASE("3-4-5 triangle") {
        Vector x(4);
        x << 3, 0, 4, 0;
        CHECK(model.h(x)(0) == doctest::Approx(5.0));
    }

    SUBCASE("noise is 400 I") {
        CHECK(model.measurement_dim() == 3);
        CHECK((model.noise().matrix() - 400.0 * Matrix::Identity(3, 3)).norm() <
              1e-12);
    }

    SUBCASE("Jacobian against central differences at seeded states") {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(-500.0, 500.0);
        for (int rep = 0; rep < 5; ++rep) {
            Vector x(4);
            x << 900.0 + u(rng), u(rng) / 100.0, 900.0 + u(rng), u(rng) / 100.0;
            const Matrix diff = model.jacobian(x) - fd_reference(model, x, 1e-4);
            CHECK(diff.cwiseAbs().maxCoeff() < 1e-6);
        }
    }

    SUBCASE("coincident target is singular") {
        Vector x(4);
        x << 0, 0, 0, 0; // exactly on sensor 0
        CHECK_THROWS_AS(model.h(x), SingularPoint);
    }

    SUBCASE("id validation") {
        CHECK_THROWS_AS(sensor_model(layout, {0, 0, 1}, 20.0), DomainError);
        CHECK_THROWS_AS(sensor_model(layout, {0, 1, 7}, 20.0), DomainError);
        CHECK_THROWS_AS(sensor_model(layout, {}, 20.0), DomainError);
    }

    SUBCASE("layout validation") {
        CHECK_THROWS_AS(SensorLayout(pos, 5), DomainError);
        CHECK_THROWS_AS(SensorLayout(pos, 0), DomainError);
    }
}

TEST_CASE("black_scholes_price matches the closed form") {
    SUBCASE("at-the-money symmetric point") {
        Vector x(2);
        x << 0.2, 0.0;
        const OptionContract c(100.0, 1.0, 100.0);
        const Vector y = black_scholes_price(x, c);
        // 100 * (2 * Phi(0.1) - 1), Phi evaluated independently.
        CHECK(y(0) == doctest::Approx(7.965567455405804).epsilon(1e-10));
        CHECK(y(1) == doctest::Approx(y(0)).epsilon(1e-12));
    }

    SUBCASE("deterministic in-the-money limit") {
        Vector x(2);
        x << 1e-4, 0.0;
        const OptionContract c(100.0, 1.0, 110.0);
        const Vector y = black_scholes_price(x, c);
        CHECK(y(0) == doctest::Approx(10.0).epsilon(1e-3));
        CHECK(std::abs(y(1)) < 1e-3);
    }

    SUBCASE("sigma domain") {
        Vector x(2);
        x << -0.1, 0.0;
        const OptionContract c(100.0, 1.0, 100.0);
        CHECK_THROWS_AS(black_scholes_price(x, c), DomainError);
        bool clamped = false;
        const Vector y = black_scholes_price(x, c, &clamped);
        CHECK(clamped);
        CHECK(std::isfinite(y(0)));
    }

    SUBCASE("contract validation") {
        CHECK_THROWS_AS(OptionContract(-1.0, 1.0, 100.0), DomainError);
        CHECK_THROWS_AS(OptionContract(100.0, 0.0, 100.0), DomainError);
        CHECK_THROWS_AS(OptionContract(100.0, 1.0, -5.0), DomainError);
    }
}

TEST_CASE("put-call parity over seeded contracts") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uS(50.0, 200.0);
    std::uniform_real_distribution<double> uX(50.0, 200.0);
    std::uniform_real_distribution<double> ur(-0.05, 0.15);
    std::uniform_real_distribution<double> usig(0.05, 0.8);
    std::uniform_real_distribution<double> ut(0.01, 2.0);
    for (int rep = 0; rep < 1000; ++rep) {
        const double S = uS(rng);
        const double X = uX(rng);
        const double r = ur(rng);
        const double sigma = usig(rng);
        const double tm = ut(rng);
        Vector x(2);
        x << sigma, r;
        const OptionContract c(X, tm, S);
        const Vector y = black_scholes_price(x, c);
        const double lhs = y(0) - y(1);
        const double rhs = S - X * std::exp(-r * tm);
        const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
        CHECK(std::abs(lhs - rhs) / scale < 1e-9);
    }
}

TEST_CASE("black_scholes_model Jacobian and clamping") {
    const OptionContract c(100.0, 0.5, 100.0);
    const MeasurementModel model = black_scholes_model(c, 1e-2);

    SUBCASE("noise is 1e-4 I") {
        CHECK((model.noise().matrix() - 1e-4 * Matrix::Identity(2, 2)).norm() <
              1e-15);
    }

    SUBCASE("closed-form Jacobian against central differences") {
        Vector x(2);
        x << 0.2, 0.05;
        const Matrix diff = model.jacobian(x) - fd_reference(model, x, 1e-5);
        CHECK(diff.cwiseAbs().maxCoeff() < 1e-5);
    }

    SUBCASE("finite-difference variant agrees with closed form") {
        const MeasurementModel fd = black_scholes_model(c, 1e-2, true);
        Vector x(2);
        x << 0.35, 0.01;
        const Matrix diff = model.jacobian(x) - fd.jacobian(x);
        CHECK(diff.cwiseAbs().maxCoeff() < 1e-5);
    }

    SUBCASE("clamp events are counted") {
        CHECK(model.clamp_events() == 0);
        Vector bad(2);
        bad << -0.3, 0.02;
        const Vector y = model.h(bad);
        CHECK(std::isfinite(y(0)));
        CHECK(model.clamp_events() == 1);
        model.h(bad);
        CHECK(model.clamp_events() == 2);
        Vector ok(2);
        ok << 0.2, 0.02;
        model.h(ok);
        CHECK(model.clamp_events() == 2);
    }
}

TEST_CASE("every Jacobian agrees with finite differences at seeded points") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> upos(200.0, 1800.0);
    std::uniform_real_distribution<double> uvel(-20.0, 20.0);

    const MeasurementModel radar = radar_model(0.1, 0.01);
    std::vector<Eigen::Vector2d> pos;
    std::uniform_real_distribution<double> ugrid(0.0, 2000.0);
    for (int i = 0; i < 8; ++i) pos.push_back({ugrid(rng), ugrid(rng)});
    const SensorLayout layout(pos, 3);
    const MeasurementModel sensors = sensor_model(layout, {1, 4, 6}, 20.0);
    const OptionContract c(100.0, 0.5, 105.0);
    const MeasurementModel bs = black_scholes_model(c, 1e-2);

    int checked = 0;
    for (int rep = 0; rep < 100; ++rep) {
        Vector x(4);
        x << upos(rng), uvel(rng), upos(rng), uvel(rng);
        for (const MeasurementModel* m : {&radar, &sensors}) {
            const Matrix J = m->jacobian(x);
            const Matrix Jfd = fd_reference(*m, x, 1e-4);
            const double scale = std::max(1.0, Jfd.cwiseAbs().maxCoeff());
            CHECK(((J - Jfd).cwiseAbs().maxCoeff() / scale) < 1e-4);
        }
        Vector xo(2);
        xo << 0.05 + 0.75 * (rep / 99.0), -0.02 + 0.001 * rep;
        const Matrix J = bs.jacobian(xo);
        const Matrix Jfd = fd_reference(bs, xo, 1e-6);
        const double scale = std::max(1.0, Jfd.cwiseAbs().maxCoeff());
        CHECK(((J - Jfd).cwiseAbs().maxCoeff() / scale) < 1e-4);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("log_likelihood matches the Gaussian density of the wrapped residual") {
    const MeasurementModel radar = radar_model(0.1, 0.01);
    Vector x(4);
    x << 1000, 10, 1000, 10;
    Vector y(2);
    y << 1414.0, 0.7853981633974483 + 2.0 * kPi; // same bearing, one turn away
    const double ll = radar.log_likelihood(y, x);
    const double dr = 1414.0 - 1414.213562373095;
    const double expected = -0.5 * (dr * dr / 0.1 + std::log(0.1) + std::log(0.01) +
                                    2.0 * std::log(2.0 * kPi));
    CHECK(ll == doctest::Approx(expected).epsilon(1e-10));
}
