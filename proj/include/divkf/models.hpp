#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <vector>

#include "divkf/gaussian.hpp"

namespace divkf {

/// Linear state transition x_t = F x_{t-1} + w_t, w_t ~ N(0, Q).
struct LinearDynamics {
    Matrix F;
    SpdMatrix Q;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Nonlinear measurement y = h(x) + v, v ~ N(0, R), with an analytic or
/// finite-difference Jacobian and optional angular components whose
/// residuals wrap into (-pi, pi].
class MeasurementModel {
public:
    using Fn = std::function<Vector(const Vector&)>;
    using JacFn = std::function<Matrix(const Vector&)>;

    MeasurementModel() = default;
    MeasurementModel(int state_dim, Fn h, JacFn jacobian, SpdMatrix noise,
                     std::vector<int> wrap_components = {});

    int state_dim() const { return state_dim_; }
    int measurement_dim() const { return noise_.dim(); }

    Vector h(const Vector& x) const { return h_(x); }
    Matrix jacobian(const Vector& x) const { return jacobian_(x); }
    const SpdMatrix& noise() const { return noise_; }

    /// True when component i is angular.
    bool wraps(int i) const;
    const std::vector<int>& wrap_components() const { return wrap_components_; }

    /// y - hx, with angular components wrapped.
    Vector residual(const Vector& y, const Vector& hx) const;

    /// log N(y; h(x), R) with wrapped residuals.
    double log_likelihood(const Vector& y, const Vector& x) const;

    /// Number of domain clamps performed by h so far (Black-Scholes sigma
    /// floor); zero for models without clamping.
    std::uint64_t clamp_events() const;

    std::shared_ptr<std::atomic<std::uint64_t>> clamp_counter; // set by factories that clamp

private:
    int state_dim_ = 0;
    Fn h_;
    JacFn jacobian_;
    SpdMatrix noise_;
    std::vector<int> wrap_components_;
};

/// Block-diagonal constant-velocity dynamics for the planar state
/// [x1, v1, x2, v2]: F2 = [[1,dt],[0,1]] per axis and white-noise
/// acceleration Q2 = sigma_cv * [[dt^4/4, dt^3/2],[dt^3/2, dt^2]].
LinearDynamics cv_dynamics(double dt, double sigma_cv);

/// Range-and-bearing radar: h(x) = [sqrt(x1^2 + x2^2), atan2(x2, x1)] on the
/// position components, R = diag(sigma_r2, sigma_theta2), bearing wrapped.
MeasurementModel radar_model(double sigma_r2, double sigma_theta2);

/// Fixed 2-D sensor positions plus how many respond per step.
struct SensorLayout {
    std::vector<Eigen::Vector2d> positions;
    int active_per_step = 3;

    SensorLayout() = default;
    SensorLayout(std::vector<Eigen::Vector2d> pos, int active);
    int count() const { return static_cast<int>(positions.size()); }
};

/// Range-only measurements from the given active sensors; R = sigma_R^2 I.
MeasurementModel sensor_model(const SensorLayout& layout,
                              const std::vector<int>& active_ids,
                              double sigma_r);

/// European option terms; spot is the exogenous underlying price for the
/// current step.
struct OptionContract {
    double strike;
    double time_to_maturity;
    double spot;

    OptionContract(double strike, double time_to_maturity, double spot);
};

/// Black-Scholes call and put prices for state x = [sigma, r].
/// Throws DomainError for sigma <= 0; `clamped`, when given, reports
/// whether the internal floor fired instead of throwing.
Vector black_scholes_price(const Vector& x, const OptionContract& contract,
                           bool* clamped = nullptr);

/// Measurement model y = [C, P] with the contract's spot bound in;
/// R = sigma_R^2 I_2. The state sigma is floored at 1e-6 before pricing and
/// each floor event is counted on the model. Jacobian is closed form
/// (vega/rho) unless fd_jacobian is set.
MeasurementModel black_scholes_model(const OptionContract& contract,
                                     double sigma_r,
                                     bool fd_jacobian = false);

} // namespace divkf
