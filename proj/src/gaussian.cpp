#include "divkf/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace divkf {

GaussianBelief::GaussianBelief(Vector mean, SpdMatrix cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (mean_.size() != cov_.dim())
        throw DimensionError("GaussianBelief: mean and covariance dimensions differ");
    if (!mean_.allFinite())
        throw DomainError("GaussianBelief: mean has non-finite entries");
}

WeightedEnsemble::WeightedEnsemble(Matrix particles, Vector weights)
    : particles_(std::move(particles)), weights_(std::move(weights)) {
    if (particles_.cols() != weights_.size())
        throw DimensionError("WeightedEnsemble: particle/weight count mismatch");
    if (!weights_.allFinite() || (weights_.array() < 0.0).any())
        throw DomainError("WeightedEnsemble: weights must be finite and nonnegative");
    total_ = weights_.sum();
}

Vector WeightedEnsemble::normalized_weights() const {
    if (!(total_ > 0.0))
        throw DegenerateEnsemble("normalized_weights: total weight is zero");
    return weights_ / total_;
}

double WeightedEnsemble::effective_sample_size() const {
    const Vector w = normalized_weights();
    // Rounding in the squared-norm sum can push the ratio marginally past
    // the mathematical range [1, count]; clamp it back.
    return std::clamp(1.0 / w.squaredNorm(), 1.0, static_cast<double>(count()));
}

Matrix mvn_sample(const GaussianBelief& belief, int count, Rng& rng) {
    if (count < 1) throw DomainError("mvn_sample: count must be >= 1");
    const int d = belief.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(d, count);
    for (int s = 0; s < count; ++s)
        for (int i = 0; i < d; ++i) z(i, s) = normal(rng);
    Matrix x = belief.cov().factor() * z;
    x.colwise() += belief.mean();
    return x;
}

double log_density(const GaussianBelief& belief, const Vector& x) {
    if (x.size() != belief.dim())
        throw DimensionError("log_density: dimension mismatch");
    const double quad = belief.cov().quad_form(x - belief.mean());
    return -0.5 * (quad + belief.cov().log_det() +
                   belief.dim() * std::log(2.0 * std::numbers::pi));
}

Vector log_density_batch(const GaussianBelief& belief, const Matrix& x) {
    if (x.rows() != belief.dim())
        throw DimensionError("log_density_batch: dimension mismatch");
    Matrix centered = x.colwise() - belief.mean();
    Matrix solved = belief.cov().factor().triangularView<Eigen::Lower>().solve(centered);
    const double norm_const =
        belief.cov().log_det() + belief.dim() * std::log(2.0 * std::numbers::pi);
    return (-0.5 * (solved.colwise().squaredNorm().array() + norm_const)).matrix();
}

GaussianBelief weighted_moments(const WeightedEnsemble& ens) {
    if (!(ens.total() > 0.0))
        throw DegenerateEnsemble("weighted_moments: total weight is zero");
    const Vector w = ens.normalized_weights();
    const Vector mean = ens.particles() * w;
    Matrix centered = ens.particles().colwise() - mean;
    Matrix cov = centered * w.asDiagonal() * centered.transpose();
    try {
        return GaussianBelief(mean, cholesky(cov));
    } catch (const NotPositiveDefinite&) {
        throw DegenerateEnsemble("weighted_moments: covariance not repairable by jitter");
    }
}

} // namespace divkf
