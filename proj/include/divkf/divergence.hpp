#pragma once

#include "divkf/adf.hpp"

namespace divkf {

/// Stochastic-search schedule and budget. The step size at iteration i is
/// rho_i = (step_offset + i)^(-step_eta).
struct SkfConfig {
    int samples_per_iter = 500;
    int iterations = 50;
    double step_offset = 10.0;
    double step_eta = 0.8;
    bool control_variate = true;
    bool estimate_cv_coeff = false; // batch cov(f,g)/var(g) instead of 1
};

/// Throws ConfigError unless S >= 2, I >= 1, eta in (0.5, 1], offset >= 0.
void validate(const SkfConfig& cfg);

/// Linearized data-fit term g(x) = -1/2 (y~ - H x)^T R^-1 (y~ - H x) with
/// y~ = wrapped(y - h(mu)) + H mu, plus the analytic pieces its expectation
/// contributes to the gradients.
class ControlVariate {
public:
    ControlVariate(const Vector& anchor, const MeasurementModel& model, const Vector& y);

    double operator()(const Vector& x) const;

    /// d E_q[g] / d mu at mu_hat: H^T R^-1 (y~ - H mu_hat).
    Vector grad_mu_term(const Vector& mu_hat) const;

    /// -2 d E_q[g] / d Sigma: H^T R^-1 H.
    const Matrix& quad_term() const { return quad_; }

    /// E_q[g], closed form; used by tests.
    double expectation(const GaussianBelief& q) const;

    const Vector& anchor() const { return anchor_; }
    const Vector& y_tilde() const { return y_tilde_; }
    const Matrix& H() const { return H_; }

private:
    Vector anchor_;
    Matrix H_;
    Vector y_tilde_;
    SpdMatrix R_;
    Matrix quad_; // H^T R^-1 H
};

/// Factory mirroring the construction used inside skf_update.
ControlVariate control_variate(const Vector& q_mean, const MeasurementModel& model,
                               const Vector& y);

/// Outcome of a divergence-minimizing update. `fallback` marks a degenerate
/// importance-sampling step (the prior was returned); `early_stop` marks an
/// SKF ascent halted by a rejected covariance step.
struct DivergenceResult {
    GaussianBelief posterior;
    bool fallback = false;
    bool early_stop = false;
    int iterations_run = 0;
    int samples_used = 0;
};

/// One-batch estimate of the variational gradients at q; exposed so tests
/// can measure bias and variance directly.
struct SkfGradients {
    Vector grad_mu;
    Matrix grad_sigma;
    double lambda_cv = 0.0; // coefficient actually applied
};

SkfGradients skf_gradients(const GaussianBelief& q, const GaussianBelief& prior,
                           const MeasurementModel& model, const Vector& y,
                           const Matrix& samples, const SkfConfig& cfg);

/// Stochastic-search update: natural-gradient ELBO ascent started from the
/// EKF posterior, S samples per iteration. Ascent steps that break positive
/// definiteness revert to the last valid iterate and stop early.
DivergenceResult skf_update(const GaussianBelief& prior, const MeasurementModel& model,
                            const Vector& y, const SkfConfig& cfg, Rng& rng);

/// Moment-matching update: self-normalized importance sampling of the
/// posterior moments with `proposal` (the prior, by default).
DivergenceResult mkf_update(const GaussianBelief& prior, const MeasurementModel& model,
                            const Vector& y, int samples, const GaussianBelief& proposal,
                            Rng& rng);

/// Tilted moment-matching update (single pass): weights
/// [p(y|x) p(x)]^alpha q_init(x)^(1-alpha) / proposal(x), alpha in (0, 1].
DivergenceResult akf_update(const GaussianBelief& prior, const MeasurementModel& model,
                            const Vector& y, double alpha, int samples,
                            const GaussianBelief& q_init, const GaussianBelief& proposal,
                            Rng& rng);

/// Major semi-axis of the p-confidence ellipsoid of the weighted-mean
/// estimator: sqrt(lambda_max(V) * chi2_d(p)) with
/// V = sum (w_s/W)^2 (x_s - mu)(x_s - mu)^T.
double confidence_radius(const WeightedEnsemble& ens, double p);

/// Sample-size controller for the moment-matching updates.
struct AdaptivePolicy {
    int s_base = 500;
    double r_max_target = 1.0;
    int s_floor = 1;
    int s_cap = 100000;
    double confidence = 0.95;
};

/// ceil(s_base * (r_base / target)^2), clamped to [s_floor, s_cap].
int min_sample_size(const AdaptivePolicy& policy, double r_base);

/// Adaptive variants: pilot batch of s_base samples, radius measurement,
/// then a top-up to min_sample_size when the pilot radius misses the target.
struct AdaptiveResult {
    DivergenceResult result;
    double r_base = 0.0;
    int s_min = 0; // policy output before the top-up decision
};

AdaptiveResult mkf_update_adaptive(const GaussianBelief& prior,
                                   const MeasurementModel& model, const Vector& y,
                                   const AdaptivePolicy& policy,
                                   const GaussianBelief& proposal, Rng& rng);

AdaptiveResult akf_update_adaptive(const GaussianBelief& prior,
                                   const MeasurementModel& model, const Vector& y,
                                   double alpha, const AdaptivePolicy& policy,
                                   const GaussianBelief& q_init,
                                   const GaussianBelief& proposal, Rng& rng);

/// Evidence lower bound of q for the update at y: quadrature data term
/// (d <= 2 only) plus analytic cross-entropy and entropy terms. The data
/// term includes the Gaussian normalizer, so at the exact posterior of a
/// linear model the value equals the log marginal likelihood.
double elbo_objective(const GaussianBelief& q, const GaussianBelief& prior,
                      const MeasurementModel& model, const Vector& y,
                      int points_per_axis = 0, double half_width_sigmas = 8.0);

} // namespace divkf
