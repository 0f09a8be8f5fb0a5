#pragma once

#include "divkf/linalg.hpp"
#include "divkf/rng.hpp"

namespace divkf {

/// Multivariate normal N(mean, cov); the currency every filter trades in.
class GaussianBelief {
public:
    GaussianBelief() = default;
    GaussianBelief(Vector mean, SpdMatrix cov);

    int dim() const { return static_cast<int>(mean_.size()); }
    const Vector& mean() const { return mean_; }
    const SpdMatrix& cov() const { return cov_; }

private:
    Vector mean_;
    SpdMatrix cov_;
};

/// Particles with nonnegative weights; particles are the columns of a
/// d x S matrix. Used by the particle filter, MKF, aKF and the
/// adaptive-sampling estimator.
class WeightedEnsemble {
public:
    WeightedEnsemble() = default;
    WeightedEnsemble(Matrix particles, Vector weights);

    int dim() const { return static_cast<int>(particles_.rows()); }
    int count() const { return static_cast<int>(particles_.cols()); }
    const Matrix& particles() const { return particles_; }
    const Vector& weights() const { return weights_; }
    double total() const { return total_; }

    /// Weights scaled to sum to one. Requires total() > 0.
    Vector normalized_weights() const;

    /// Effective sample size 1 / sum(normalized w^2); in [1, S].
    double effective_sample_size() const;

private:
    Matrix particles_; // d x S
    Vector weights_;   // S
    double total_ = 0.0;
};

/// Draws `count` iid samples x = mean + L z (columns of the result).
/// Deterministic given the generator state.
Matrix mvn_sample(const GaussianBelief& belief, int count, Rng& rng);

/// Gaussian log-density at x, computed through the Cholesky factor.
double log_density(const GaussianBelief& belief, const Vector& x);

/// Log-density of every column of x; one batched triangular solve.
Vector log_density_batch(const GaussianBelief& belief, const Matrix& x);

/// Weighted mean and covariance of an ensemble, jittered into an SpdMatrix.
/// Throws DegenerateEnsemble when W = 0 or the covariance cannot be
/// repaired by the jitter policy.
GaussianBelief weighted_moments(const WeightedEnsemble& ens);

} // namespace divkf
