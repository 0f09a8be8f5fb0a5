#include "divkf/divergence.hpp"

#include <algorithm>
#include <cmath>

namespace divkf {
namespace {

constexpr double kPi = 3.14159265358979323846;

double data_term(const MeasurementModel& model, const Vector& y, const Vector& x) {
    const Vector r = model.residual(y, model.h(x));
    return -0.5 * model.noise().quad_form(r);
}

Vector log_likelihoods(const MeasurementModel& model, const Vector& y,
                       const Matrix& samples) {
    const int s = static_cast<int>(samples.cols());
    Vector out(s);
    for (int j = 0; j < s; ++j) out(j) = model.log_likelihood(y, samples.col(j));
    return out;
}

/// Shared importance-sampling core for the moment-matching updates.
DivergenceResult tilted_moment_update(const GaussianBelief& prior,
                                      const MeasurementModel& model, const Vector& y,
                                      double alpha, int samples,
                                      const GaussianBelief& q_init,
                                      const GaussianBelief& proposal, Rng& rng) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw DomainError("tilted update: alpha must lie in (0, 1]");
    if (samples < prior.dim() + 1)
        throw DomainError("tilted update: need at least d+1 samples");
    if (proposal.dim() != prior.dim() || q_init.dim() != prior.dim())
        throw DimensionError("tilted update: proposal dimension mismatch");

    const Matrix x = mvn_sample(proposal, samples, rng);
    Vector logw = alpha * (log_likelihoods(model, y, x).array() +
                           log_density_batch(prior, x).array()).matrix();
    if (alpha < 1.0) logw += (1.0 - alpha) * log_density_batch(q_init, x);
    logw -= log_density_batch(proposal, x);

    DivergenceResult out;
    out.samples_used = samples;
    const double peak = logw.maxCoeff();
    if (!std::isfinite(peak)) {
        out.posterior = prior;
        out.fallback = true;
        return out;
    }
    const Vector w = (logw.array() - peak).exp();
    try {
        out.posterior = weighted_moments(WeightedEnsemble(x, w));
    } catch (const DegenerateEnsemble&) {
        out.posterior = prior;
        out.fallback = true;
    }
    return out;
}

/// Two-batch adaptive wrapper: measure the radius on the pilot batch, top up
/// if it exceeds the target, and recompute the moments over everything.
AdaptiveResult adaptive_update(const GaussianBelief& prior, const MeasurementModel& model,
                               const Vector& y, double alpha,
                               const AdaptivePolicy& policy, const GaussianBelief& q_init,
                               const GaussianBelief& proposal, Rng& rng) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw DomainError("adaptive update: alpha must lie in (0, 1]");
    if (policy.s_base < prior.dim() + 1)
        throw ConfigError("adaptive update: pilot batch smaller than d+1");

    auto log_weights = [&](const Matrix& x) {
        Vector logw = alpha * (log_likelihoods(model, y, x).array() +
                               log_density_batch(prior, x).array()).matrix();
        if (alpha < 1.0) logw += (1.0 - alpha) * log_density_batch(q_init, x);
        logw -= log_density_batch(proposal, x);
        return logw;
    };

    Matrix x = mvn_sample(proposal, policy.s_base, rng);
    Vector logw = log_weights(x);

    AdaptiveResult out;
    out.result.samples_used = policy.s_base;
    double peak = logw.maxCoeff();
    if (!std::isfinite(peak)) {
        out.result.posterior = prior;
        out.result.fallback = true;
        out.s_min = policy.s_cap; // an unusable pilot carries no radius information
        return out;
    }

    {
        const Vector w = (logw.array() - peak).exp();
        out.r_base = confidence_radius(WeightedEnsemble(x, w), policy.confidence);
    }
    out.s_min = min_sample_size(policy, out.r_base);

    if (out.s_min > policy.s_base) {
        const int extra = out.s_min - policy.s_base;
        Matrix x2 = mvn_sample(proposal, extra, rng);
        Matrix all(x.rows(), x.cols() + x2.cols());
        all << x, x2;
        Vector logw2 = log_weights(x2);
        Vector all_logw(logw.size() + logw2.size());
        all_logw << logw, logw2;
        x = std::move(all);
        logw = std::move(all_logw);
        peak = logw.maxCoeff();
    }
    out.result.samples_used = static_cast<int>(x.cols());

    const Vector w = (logw.array() - peak).exp();
    try {
        out.result.posterior = weighted_moments(WeightedEnsemble(x, w));
    } catch (const DegenerateEnsemble&) {
        out.result.posterior = prior;
        out.result.fallback = true;
    }
    return out;
}

} // namespace

void validate(const SkfConfig& cfg) {
    if (cfg.samples_per_iter < 2) throw ConfigError("SkfConfig: samples_per_iter >= 2");
    if (cfg.iterations < 1) throw ConfigError("SkfConfig: iterations >= 1");
    if (!(cfg.step_eta > 0.5) || cfg.step_eta > 1.0)
        throw ConfigError("SkfConfig: step_eta must lie in (0.5, 1]");
    if (cfg.step_offset < 0.0) throw ConfigError("SkfConfig: step_offset >= 0");
}

ControlVariate::ControlVariate(const Vector& anchor, const MeasurementModel& model,
                               const Vector& y)
    : anchor_(anchor),
      H_(model.jacobian(anchor)),
      R_(model.noise()) {
    // Wrap the anchoring residual so angular measurements stay on the same
    // branch as the exact data term.
    y_tilde_ = model.residual(y, model.h(anchor)) + H_ * anchor;
    quad_ = H_.transpose() * R_.solve(H_);
}

double ControlVariate::operator()(const Vector& x) const {
    const Vector v = y_tilde_ - H_ * x;
    return -0.5 * R_.quad_form(v);
}

Vector ControlVariate::grad_mu_term(const Vector& mu_hat) const {
    return H_.transpose() * R_.solve(Vector(y_tilde_ - H_ * mu_hat));
}

double ControlVariate::expectation(const GaussianBelief& q) const {
    const Vector v = y_tilde_ - H_ * q.mean();
    return -0.5 * (R_.quad_form(v) + (quad_ * q.cov().matrix()).trace());
}

ControlVariate control_variate(const Vector& q_mean, const MeasurementModel& model,
                               const Vector& y) {
    return ControlVariate(q_mean, model, y);
}

SkfGradients skf_gradients(const GaussianBelief& q, const GaussianBelief& prior,
                           const MeasurementModel& model, const Vector& y,
                           const Matrix& samples, const SkfConfig& cfg) {
    const int d = q.dim();
    const int s = static_cast<int>(samples.cols());
    if (samples.rows() != d) throw DimensionError("skf_gradients: sample dimension");
    if (s < 2) throw DomainError("skf_gradients: need at least two samples");

    SkfGradients out;
    Vector f(s);
    for (int j = 0; j < s; ++j) f(j) = data_term(model, y, samples.col(j));

    Vector g = Vector::Zero(s);
    ControlVariate cv = control_variate(q.mean(), model, y);
    if (cfg.control_variate) {
        for (int j = 0; j < s; ++j) g(j) = cv(samples.col(j));
        if (cfg.estimate_cv_coeff) {
            const double fm = f.mean(), gm = g.mean();
            const double cov_fg = ((f.array() - fm) * (g.array() - gm)).sum();
            const double var_g = ((g.array() - gm) * (g.array() - gm)).sum();
            out.lambda_cv = var_g > 1e-300 ? cov_fg / var_g : 1.0;
        } else {
            out.lambda_cv = 1.0;
        }
    }

    const Vector c = f - out.lambda_cv * g;
    const Matrix centered = samples.colwise() - q.mean();
    const Matrix u = q.cov().solve(centered); // Sigma^-1 (x_s - mu), batched

    const Matrix sigma_inv = q.cov().inverse();
    const Matrix prior_inv = prior.cov().inverse();

    out.grad_mu = u * c / s + prior.cov().solve(Vector(prior.mean() - q.mean()));
    out.grad_sigma = 0.5 * (u * c.asDiagonal() * u.transpose() / s -
                            c.mean() * sigma_inv) +
                     0.5 * (sigma_inv - prior_inv);
    if (out.lambda_cv != 0.0) {
        out.grad_mu += out.lambda_cv * cv.grad_mu_term(q.mean());
        out.grad_sigma -= out.lambda_cv * 0.5 * cv.quad_term();
    }
    return out;
}

DivergenceResult skf_update(const GaussianBelief& prior, const MeasurementModel& model,
                            const Vector& y, const SkfConfig& cfg, Rng& rng) {
    validate(cfg);
    DivergenceResult out;
    out.posterior = joint_gaussian_update(prior, ekf_stats(prior, model), y,
                                          model.wrap_components());

    for (int i = 1; i <= cfg.iterations; ++i) {
        const double rho = std::pow(cfg.step_offset + i, -cfg.step_eta);
        const Matrix samples = mvn_sample(out.posterior, cfg.samples_per_iter, rng);
        const SkfGradients grads =
            skf_gradients(out.posterior, prior, model, y, samples, cfg);

        const Matrix& sigma = out.posterior.cov().matrix();
        const Vector mu_new = out.posterior.mean() + rho * (sigma * grads.grad_mu);
        const Matrix sigma_new = sigma + rho * (sigma * grads.grad_sigma * sigma);
        try {
            out.posterior = GaussianBelief(mu_new, cholesky(sigma_new));
        } catch (const NotPositiveDefinite&) {
            out.early_stop = true;
            break;
        } catch (const DomainError&) { // non-finite step
            out.early_stop = true;
            break;
        }
        out.iterations_run = i;
    }
    out.samples_used = out.iterations_run * cfg.samples_per_iter;
    return out;
}

DivergenceResult mkf_update(const GaussianBelief& prior, const MeasurementModel& model,
                            const Vector& y, int samples, const GaussianBelief& proposal,
                            Rng& rng) {
    // Reverse-KL moment matching is the alpha -> 1 endpoint of the tilt.
    return tilted_moment_update(prior, model, y, 1.0, samples, prior, proposal, rng);
}

DivergenceResult akf_update(const GaussianBelief& prior, const MeasurementModel& model,
                            const Vector& y, double alpha, int samples,
                            const GaussianBelief& q_init, const GaussianBelief& proposal,
                            Rng& rng) {
    return tilted_moment_update(prior, model, y, alpha, samples, q_init, proposal, rng);
}

double confidence_radius(const WeightedEnsemble& ens, double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw DomainError("confidence_radius: p must lie in (0, 1)");
    const Vector wn = ens.normalized_weights(); // throws DegenerateEnsemble at W = 0
    const Vector mu = ens.particles() * wn;

    const int d = ens.dim();
    Matrix v = Matrix::Zero(d, d);
    for (int j = 0; j < ens.count(); ++j) {
        const Vector delta = ens.particles().col(j) - mu;
        v += (wn(j) * wn(j)) * delta * delta.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(v);
    const double lambda_max = es.eigenvalues().maxCoeff();
    return std::sqrt(std::max(0.0, lambda_max) * chi2_quantile(d, p));
}

int min_sample_size(const AdaptivePolicy& policy, double r_base) {
    if (!(policy.r_max_target > 0.0))
        throw ConfigError("AdaptivePolicy: r_max_target must be positive");
    if (!(policy.confidence > 0.0) || !(policy.confidence < 1.0))
        throw ConfigError("AdaptivePolicy: confidence must lie in (0, 1)");
    if (!(r_base > 0.0)) throw DomainError("min_sample_size: r_base must be positive");

    const double ratio = r_base / policy.r_max_target;
    const double raw = std::ceil(policy.s_base * ratio * ratio);
    const double clamped =
        std::min(static_cast<double>(policy.s_cap),
                 std::max(static_cast<double>(policy.s_floor), raw));
    return static_cast<int>(clamped);
}

AdaptiveResult mkf_update_adaptive(const GaussianBelief& prior,
                                   const MeasurementModel& model, const Vector& y,
                                   const AdaptivePolicy& policy,
                                   const GaussianBelief& proposal, Rng& rng) {
    return adaptive_update(prior, model, y, 1.0, policy, prior, proposal, rng);
}

AdaptiveResult akf_update_adaptive(const GaussianBelief& prior,
                                   const MeasurementModel& model, const Vector& y,
                                   double alpha, const AdaptivePolicy& policy,
                                   const GaussianBelief& q_init,
                                   const GaussianBelief& proposal, Rng& rng) {
    return adaptive_update(prior, model, y, alpha, policy, q_init, proposal, rng);
}

double elbo_objective(const GaussianBelief& q, const GaussianBelief& prior,
                      const MeasurementModel& model, const Vector& y,
                      int points_per_axis, double half_width_sigmas) {
    const int d = q.dim();
    if (d > 2) throw DomainError("elbo_objective: quadrature supports d <= 2 only");
    if (prior.dim() != d) throw DimensionError("elbo_objective: prior dimension");
    if (points_per_axis <= 0) points_per_axis = d == 1 ? 2001 : 401;

    // Data term E_q[log p(y|x)] over the whitened grid x = mu + L u.
    const Matrix& l = q.cov().factor();
    const double lo = -half_width_sigmas, hi = half_width_sigmas;
    const double du = (hi - lo) / (points_per_axis - 1);
    const int p = model.measurement_dim();
    const double log_norm =
        -0.5 * (model.noise().log_det() + p * std::log(2.0 * kPi));

    double mass = 0.0, acc = 0.0;
    if (d == 1) {
        for (int i = 0; i < points_per_axis; ++i) {
            const double u = lo + i * du;
            const double w = std::exp(-0.5 * u * u) * du / std::sqrt(2.0 * kPi);
            Vector x = q.mean() + l.col(0) * u;
            acc += w * data_term(model, y, x);
            mass += w;
        }
    } else {
        for (int i = 0; i < points_per_axis; ++i) {
            const double u1 = lo + i * du;
            const double w1 = std::exp(-0.5 * u1 * u1) * du / std::sqrt(2.0 * kPi);
            for (int j = 0; j < points_per_axis; ++j) {
                const double u2 = lo + j * du;
                const double w =
                    w1 * std::exp(-0.5 * u2 * u2) * du / std::sqrt(2.0 * kPi);
                Vector x = q.mean() + l.col(0) * u1 + l.col(1) * u2;
                acc += w * data_term(model, y, x);
                mass += w;
            }
        }
    }
    const double data = acc / mass + log_norm;

    // Cross-entropy E_q[log p(x)] and entropy H(q), both closed form.
    const Vector dm = q.mean() - prior.mean();
    const double cross =
        -0.5 * (prior.cov().quad_form(dm) +
                (prior.cov().solve(q.cov().matrix())).trace() +
                prior.cov().log_det() + d * std::log(2.0 * kPi));
    const double entropy = 0.5 * (d * std::log(2.0 * kPi * std::exp(1.0)) +
                                  q.cov().log_det());
    return data + cross + entropy;
}

} // namespace divkf
