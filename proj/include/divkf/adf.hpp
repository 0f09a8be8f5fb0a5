#pragma once

#include "divkf/models.hpp"

namespace divkf {

/// Moments of the joint Gaussian over (x, y): everything a conditional
/// update needs, however the moments were obtained (linearization, sigma
/// points, or exact linear algebra).
struct JointGaussianStats {
    Vector mu_y;       // p
    SpdMatrix Sigma_yy; // p x p, includes measurement noise
    Matrix Sigma_xy;   // d x p
};

/// Deterministic sample set {mu, mu +/- sqrt(d+lambda) L e_s} with matched
/// first and second moments.
struct SigmaPoints {
    Matrix points;  // d x (2d+1), column 0 at the mean
    Vector weights; // sums to 1
    double lambda = 0.0;
};

/// Classic spread heuristic lambda = 3 - d, floored to 1 for d >= 3 where
/// the negative center weight would destabilize the covariance estimate.
double default_ukf_lambda(int dim);

/// Time update: mean F mu, covariance F Sigma F^T + Q (symmetrized, jittered).
GaussianBelief predict(const GaussianBelief& prior, const LinearDynamics& dyn);

/// Conditions the joint Gaussian on y: mean mu_x + Sigma_xy Sigma_yy^-1 r,
/// covariance Sigma_xx - Sigma_xy Sigma_yy^-1 Sigma_yx, with the residual r
/// wrapped on the flagged components.
GaussianBelief joint_gaussian_update(const GaussianBelief& prior,
                                     const JointGaussianStats& stats,
                                     const Vector& y,
                                     const std::vector<int>& wrap_components = {});

/// First-order (Taylor) joint statistics: H at the prior mean.
JointGaussianStats ekf_stats(const GaussianBelief& prior, const MeasurementModel& model);

/// 2d+1 sigma points of the belief; requires d + lambda > 0.
SigmaPoints sigma_points(const GaussianBelief& belief, double lambda);

/// Unscented joint statistics: empirical moments of the propagated sigma
/// points, circular mean for wrapped components, noise added to Sigma_yy.
JointGaussianStats ukf_stats(const GaussianBelief& prior, const MeasurementModel& model,
                             double lambda);

} // namespace divkf
