#include "divkf/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace divkf {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSigmaFloor = 1e-6;
constexpr double kRangeFloor = 1e-9;

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

Matrix fd_jacobian_of(const MeasurementModel::Fn& h, const Vector& x, int p) {
    const int d = static_cast<int>(x.size());
    Matrix J(p, d);
    for (int j = 0; j < d; ++j) {
        const double step = 1e-5 * std::max(1.0, std::abs(x(j)));
        Vector lo = x, hi = x;
        lo(j) -= step;
        hi(j) += step;
        J.col(j) = (h(hi) - h(lo)) / (2.0 * step);
    }
    return J;
}

} // namespace

double wrap_angle(double theta) {
    double w = std::remainder(theta, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

MeasurementModel::MeasurementModel(int state_dim, Fn h, JacFn jacobian, SpdMatrix noise,
                                   std::vector<int> wrap_components)
    : state_dim_(state_dim),
      h_(std::move(h)),
      jacobian_(std::move(jacobian)),
      noise_(std::move(noise)),
      wrap_components_(std::move(wrap_components)) {
    if (state_dim_ <= 0) throw DimensionError("MeasurementModel: state_dim must be positive");
    if (!h_) throw ConfigError("MeasurementModel: missing measurement function");
    for (int i : wrap_components_) {
        if (i < 0 || i >= noise_.dim())
            throw DimensionError("MeasurementModel: wrap component out of range");
    }
    if (!jacobian_) {
        // Central finite differences as the default linearization.
        Fn fn = h_;
        const int p = noise_.dim();
        jacobian_ = [fn, p](const Vector& x) { return fd_jacobian_of(fn, x, p); };
    }
}

bool MeasurementModel::wraps(int i) const {
    return std::find(wrap_components_.begin(), wrap_components_.end(), i) !=
           wrap_components_.end();
}

Vector MeasurementModel::residual(const Vector& y, const Vector& hx) const {
    if (y.size() != hx.size() || y.size() != noise_.dim())
        throw DimensionError("MeasurementModel::residual: dimension mismatch");
    Vector r = y - hx;
    for (int i : wrap_components_) r(i) = wrap_angle(r(i));
    return r;
}

double MeasurementModel::log_likelihood(const Vector& y, const Vector& x) const {
    const Vector r = residual(y, h_(x));
    const int p = noise_.dim();
    return -0.5 * (noise_.quad_form(r) + noise_.log_det() + p * std::log(2.0 * kPi));
}

std::uint64_t MeasurementModel::clamp_events() const {
    return clamp_counter ? clamp_counter->load() : 0;
}

LinearDynamics cv_dynamics(double dt, double sigma_cv) {
    if (!(dt > 0.0) || !(sigma_cv > 0.0))
        throw DomainError("cv_dynamics: dt and sigma_cv must be positive");
    Matrix F = Matrix::Identity(4, 4);
    F(0, 1) = dt;
    F(2, 3) = dt;
    Matrix Q = Matrix::Zero(4, 4);
    Eigen::Matrix2d q2;
    q2 << dt * dt * dt * dt / 4.0, dt * dt * dt / 2.0,
          dt * dt * dt / 2.0,      dt * dt;
    q2 *= sigma_cv;
    Q.block<2, 2>(0, 0) = q2;
    Q.block<2, 2>(2, 2) = q2;
    return LinearDynamics{F, cholesky(Q)};
}

MeasurementModel radar_model(double sigma_r2, double sigma_theta2) {
    if (!(sigma_r2 > 0.0) || !(sigma_theta2 > 0.0))
        throw DomainError("radar_model: variances must be positive");
    auto h = [](const Vector& x) {
        const double r = std::hypot(x(0), x(2));
        if (r < kRangeFloor) throw SingularPoint("radar_model: target at sensor origin");
        Vector y(2);
        y << r, std::atan2(x(2), x(0));
        return y;
    };
    auto jac = [](const Vector& x) {
        const double r = std::hypot(x(0), x(2));
        if (r < kRangeFloor) throw SingularPoint("radar_model: Jacobian undefined at origin");
        Matrix J = Matrix::Zero(2, 4);
        J(0, 0) = x(0) / r;
        J(0, 2) = x(2) / r;
        J(1, 0) = -x(2) / (r * r);
        J(1, 2) = x(0) / (r * r);
        return J;
    };
    Vector variances(2);
    variances << sigma_r2, sigma_theta2;
    return MeasurementModel(4, h, jac, SpdMatrix::diagonal(variances), {1});
}

SensorLayout::SensorLayout(std::vector<Eigen::Vector2d> pos, int active)
    : positions(std::move(pos)), active_per_step(active) {
    if (active_per_step <= 0 || active_per_step > count())
        throw DomainError("SensorLayout: active_per_step out of range");
    for (const auto& p : positions) {
        if (!p.allFinite()) throw DomainError("SensorLayout: non-finite sensor position");
    }
}

MeasurementModel sensor_model(const SensorLayout& layout,
                              const std::vector<int>& active_ids,
                              double sigma_r) {
    if (!(sigma_r > 0.0)) throw DomainError("sensor_model: sigma_r must be positive");
    if (active_ids.empty()) throw DomainError("sensor_model: no active sensors");
    std::set<int> seen;
    std::vector<Eigen::Vector2d> active;
    active.reserve(active_ids.size());
    for (int id : active_ids) {
        if (id < 0 || id >= layout.count())
            throw DomainError("sensor_model: active sensor id out of range");
        if (!seen.insert(id).second)
            throw DomainError("sensor_model: duplicate active sensor id");
        active.push_back(layout.positions[static_cast<std::size_t>(id)]);
    }
    const int p = static_cast<int>(active.size());
    auto h = [active, p](const Vector& x) {
        Vector y(p);
        for (int i = 0; i < p; ++i) {
            const double dx = x(0) - active[static_cast<std::size_t>(i)](0);
            const double dy = x(2) - active[static_cast<std::size_t>(i)](1);
            const double r = std::hypot(dx, dy);
            if (r < kRangeFloor)
                throw SingularPoint("sensor_model: target coincides with a sensor");
            y(i) = r;
        }
        return y;
    };
    auto jac = [active, p](const Vector& x) {
        Matrix J = Matrix::Zero(p, 4);
        for (int i = 0; i < p; ++i) {
            const double dx = x(0) - active[static_cast<std::size_t>(i)](0);
            const double dy = x(2) - active[static_cast<std::size_t>(i)](1);
            const double r = std::hypot(dx, dy);
            if (r < kRangeFloor)
                throw SingularPoint("sensor_model: Jacobian undefined at a sensor");
            J(i, 0) = dx / r;
            J(i, 2) = dy / r;
        }
        return J;
    };
    return MeasurementModel(4, h, jac, SpdMatrix::isotropic(p, sigma_r * sigma_r));
}

OptionContract::OptionContract(double strike_, double time_to_maturity_, double spot_)
    : strike(strike_), time_to_maturity(time_to_maturity_), spot(spot_) {
    if (!(strike > 0.0) || !(time_to_maturity > 0.0) || !(spot > 0.0))
        throw DomainError("OptionContract: strike, maturity and spot must be positive");
}

Vector black_scholes_price(const Vector& x, const OptionContract& contract, bool* clamped) {
    if (x.size() != 2) throw DimensionError("black_scholes_price: state must be [sigma, r]");
    double sigma = x(0);
    const double r = x(1);
    if (clamped) {
        *clamped = sigma < kSigmaFloor;
        sigma = std::max(sigma, kSigmaFloor);
    } else if (sigma <= 0.0) {
        throw DomainError("black_scholes_price: sigma must be positive");
    }
    const double S = contract.spot;
    const double X = contract.strike;
    const double tm = contract.time_to_maturity;
    const double sqrt_tm = std::sqrt(tm);
    const double d1 = (std::log(S / X) + (r + 0.5 * sigma * sigma) * tm) / (sigma * sqrt_tm);
    const double d2 = d1 - sigma * sqrt_tm;
    const double disc = X * std::exp(-r * tm);
    Vector y(2);
    y << S * norm_cdf(d1) - disc * norm_cdf(d2),
        -S * norm_cdf(-d1) + disc * norm_cdf(-d2);
    return y;
}

MeasurementModel black_scholes_model(const OptionContract& contract,
                                     double sigma_r,
                                     bool fd_jacobian) {
    if (!(sigma_r > 0.0)) throw DomainError("black_scholes_model: sigma_r must be positive");
    auto counter = std::make_shared<std::atomic<std::uint64_t>>(0);
    auto h = [contract, counter](const Vector& x) {
        bool clamped = false;
        Vector y = black_scholes_price(x, contract, &clamped);
        if (clamped) counter->fetch_add(1);
        return y;
    };
    MeasurementModel::JacFn jac;
    if (!fd_jacobian) {
        jac = [contract](const Vector& x) {
            if (x.size() != 2)
                throw DimensionError("black_scholes_model: state must be [sigma, r]");
            const double sigma = std::max(x(0), kSigmaFloor);
            const double r = x(1);
            const double S = contract.spot;
            const double X = contract.strike;
            const double tm = contract.time_to_maturity;
            const double sqrt_tm = std::sqrt(tm);
            const double d1 =
                (std::log(S / X) + (r + 0.5 * sigma * sigma) * tm) / (sigma * sqrt_tm);
            const double d2 = d1 - sigma * sqrt_tm;
            const double disc = X * std::exp(-r * tm);
            Matrix J(2, 2);
            const double vega = S * norm_pdf(d1) * sqrt_tm; // identical for call and put
            J(0, 0) = vega;
            J(1, 0) = vega;
            J(0, 1) = tm * disc * norm_cdf(d2);
            J(1, 1) = -tm * disc * norm_cdf(-d2);
            return J;
        };
    }
    MeasurementModel model(2, h, jac, SpdMatrix::isotropic(2, sigma_r * sigma_r));
    model.clamp_counter = counter;
    return model;
}

} // namespace divkf
