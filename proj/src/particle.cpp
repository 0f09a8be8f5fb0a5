#include "divkf/particle.hpp"

#include <cmath>

namespace divkf {
namespace {

Matrix propagate(const Matrix& particles, const LinearDynamics& dyn, Rng& rng) {
    const int d = static_cast<int>(particles.rows());
    const int s = static_cast<int>(particles.cols());
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(d, s);
    for (int j = 0; j < s; ++j)
        for (int i = 0; i < d; ++i) z(i, j) = normal(rng);
    return dyn.F * particles + dyn.Q.factor() * z;
}

} // namespace

ParticleState pf_init(const GaussianBelief& init, const LinearDynamics& dyn, int count,
                      Rng& rng) {
    if (count < 1) throw DomainError("pf_init: need at least one particle");
    const Matrix x0 = mvn_sample(init, count, rng);
    return ParticleState{
        WeightedEnsemble(propagate(x0, dyn, rng), Vector::Ones(count)), 0};
}

std::vector<int> systematic_resample(const Vector& weights, int count, Rng& rng) {
    const int s = static_cast<int>(weights.size());
    if (s == 0 || count < 1)
        throw DegenerateEnsemble("systematic_resample: empty input");
    const double total = weights.sum();
    if (!(total > 0.0) || !weights.allFinite() || weights.minCoeff() < 0.0)
        throw DegenerateEnsemble("systematic_resample: invalid weights");

    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double offset = uniform(rng);
    std::vector<int> ancestors(static_cast<std::size_t>(count));
    double cumulative = weights(0);
    int j = 0;
    for (int i = 0; i < count; ++i) {
        const double u = total * (offset + i) / count;
        while (cumulative < u && j + 1 < s) cumulative += weights(++j);
        ancestors[static_cast<std::size_t>(i)] = j;
    }
    return ancestors;
}

PfStepResult pf_step(const ParticleState& state, const LinearDynamics& dyn,
                     const MeasurementModel& model, const Vector& y, Rng& rng) {
    const Matrix& particles = state.ensemble.particles();
    const int s = state.ensemble.count();
    if (s == 0) throw DegenerateEnsemble("pf_step: empty ensemble");

    // Log-likelihood weights with max-subtraction before exponentiation.
    Vector logw(s);
    for (int j = 0; j < s; ++j) logw(j) = model.log_likelihood(y, particles.col(j));
    const double peak = logw.maxCoeff();
    bool collapse = !std::isfinite(peak);
    Vector w;
    if (collapse) {
        w = Vector::Ones(s);
    } else {
        w = (logw.array() - peak).exp();
        if (!(w.sum() > 0.0)) {
            collapse = true;
            w = Vector::Ones(s);
        }
    }

    WeightedEnsemble weighted(particles, w);
    GaussianBelief summary;
    try {
        summary = weighted_moments(weighted);
    } catch (const DegenerateEnsemble&) {
        // Near point-mass posterior: the weighted mean is still meaningful,
        // only the scatter is numerically rank-deficient. Floor it.
        const Vector wn = weighted.normalized_weights();
        const Vector mean = particles * wn;
        const int d = static_cast<int>(particles.rows());
        Matrix scatter = Matrix::Zero(d, d);
        for (int j = 0; j < s; ++j) {
            const Vector delta = particles.col(j) - mean;
            scatter += wn(j) * delta * delta.transpose();
        }
        scatter += 1e-12 * std::max(1.0, scatter.trace()) * Matrix::Identity(d, d);
        summary = GaussianBelief(mean, cholesky(scatter));
    }

    const std::vector<int> ancestors =
        systematic_resample(weighted.weights(), s, rng);
    Matrix resampled(particles.rows(), s);
    for (int i = 0; i < s; ++i) resampled.col(i) = particles.col(ancestors[static_cast<std::size_t>(i)]);

    ParticleState next{
        WeightedEnsemble(propagate(resampled, dyn, rng), Vector::Ones(s)),
        state.step_count + 1};
    return PfStepResult{std::move(next), std::move(summary), collapse};
}

} // namespace divkf
