#pragma once

#include <functional>
#include <vector>

#include "divkf/divergence.hpp"

namespace divkf {
namespace oracle {

/// Dense-grid layout: per-axis span of +/- half_width standard deviations
/// around the prior mean. points_per_axis = 0 picks 2001 (d=1) / 401 (d=2).
struct GridSpec {
    double half_width_sigmas = 8.0;
    int points_per_axis = 0;
};

/// Riemann-sum moments of the (optionally tilted) posterior density
/// p(y|x)^alpha p(x)^alpha q(x)^(1-alpha), normalized on the grid.
/// alpha = 1 with tilt_q = nullptr gives the plain posterior. d <= 2 only.
GaussianBelief grid_posterior_moments(const GaussianBelief& prior,
                                      const MeasurementModel& model, const Vector& y,
                                      const GridSpec& grid = {}, double alpha = 1.0,
                                      const GaussianBelief* tilt_q = nullptr);

/// Central-difference gradient of a scalar function of (mean, covariance).
/// Covariance entries are perturbed in symmetric pairs, so the result is the
/// symmetric-matrix gradient convention (d log|S| / dS = S^-1).
struct BeliefGradient {
    Vector d_mean;
    Matrix d_cov;
};

BeliefGradient fd_gradient(const std::function<double(const GaussianBelief&)>& fn,
                           const GaussianBelief& at, double step);

/// Textbook linear Kalman recursion, deliberately coded with plain matrix
/// inverses and sharing nothing with the production update path.
struct KfResult {
    std::vector<Vector> means; // posterior mean after each measurement
    std::vector<Matrix> covs;
};

KfResult reference_kf(const std::vector<Vector>& ys, const Matrix& F, const Matrix& Q,
                      const Matrix& H, const Matrix& R, const Vector& m0,
                      const Matrix& p0);

} // namespace oracle
} // namespace divkf
