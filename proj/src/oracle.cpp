#include "divkf/oracle.hpp"

#include <cmath>
#include <limits>

namespace divkf {
namespace oracle {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Self-contained Gaussian log-density via a plain inverse; the production
// code path (Cholesky solves) is deliberately not reused here.
double plain_log_density(const Vector& mu, const Matrix& cov, const Vector& x) {
    const Vector d = x - mu;
    const Matrix inv = cov.inverse();
    const double quad = d.dot(inv * d);
    const double logdet = std::log(cov.determinant());
    return -0.5 * (quad + logdet + d.size() * std::log(2.0 * kPi));
}

double plain_log_likelihood(const MeasurementModel& model, const Vector& y,
                            const Vector& x) {
    const Vector r = model.residual(y, model.h(x));
    const Matrix inv = model.noise().matrix().inverse();
    const double quad = r.dot(inv * r);
    const double logdet = std::log(model.noise().matrix().determinant());
    return -0.5 * (quad + logdet + r.size() * std::log(2.0 * kPi));
}

int axis_points(const GridSpec& grid, int d) {
    const int n = grid.points_per_axis > 0 ? grid.points_per_axis
                                           : (d == 1 ? 2001 : 401);
    if (n < 201) throw DomainError("GridSpec: need at least 201 points per axis");
    if (!std::isfinite(grid.half_width_sigmas) || grid.half_width_sigmas <= 0.0)
        throw DomainError("GridSpec: bounds must be finite and positive");
    return n;
}

} // namespace

GaussianBelief grid_posterior_moments(const GaussianBelief& prior,
                                      const MeasurementModel& model, const Vector& y,
                                      const GridSpec& grid, double alpha,
                                      const GaussianBelief* tilt_q) {
    const int d = prior.dim();
    if (d > 2) throw DomainError("grid_posterior_moments: d <= 2 only");
    if (!(alpha > 0.0) || alpha > 1.0)
        throw DomainError("grid_posterior_moments: alpha must lie in (0, 1]");

    const int n = axis_points(grid, d);
    const Vector mu = prior.mean();
    const Matrix cov = prior.cov().matrix();
    const Matrix qcov = tilt_q ? tilt_q->cov().matrix() : Matrix();

    auto log_target = [&](const Vector& x) {
        double v = alpha * (plain_log_likelihood(model, y, x) +
                            plain_log_density(mu, cov, x));
        if (tilt_q && alpha < 1.0)
            v += (1.0 - alpha) * plain_log_density(tilt_q->mean(), qcov, x);
        return v;
    };

    std::vector<Vector> points;
    if (d == 1) {
        const double sd = std::sqrt(cov(0, 0));
        const double lo = mu(0) - grid.half_width_sigmas * sd;
        const double step = 2.0 * grid.half_width_sigmas * sd / (n - 1);
        points.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Vector x(1);
            x << lo + i * step;
            points.push_back(x);
        }
    } else {
        const double sd0 = std::sqrt(cov(0, 0));
        const double sd1 = std::sqrt(cov(1, 1));
        const double lo0 = mu(0) - grid.half_width_sigmas * sd0;
        const double lo1 = mu(1) - grid.half_width_sigmas * sd1;
        const double st0 = 2.0 * grid.half_width_sigmas * sd0 / (n - 1);
        const double st1 = 2.0 * grid.half_width_sigmas * sd1 / (n - 1);
        points.reserve(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Vector x(2);
                x << lo0 + i * st0, lo1 + j * st1;
                points.push_back(x);
            }
    }

    std::vector<double> logd(points.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        logd[i] = log_target(points[i]);
        peak = std::max(peak, logd[i]);
    }
    if (!std::isfinite(peak))
        throw DegenerateEnsemble("grid_posterior_moments: target vanished on grid");

    double total = 0.0;
    Vector mean = Vector::Zero(d);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double w = std::exp(logd[i] - peak);
        total += w;
        mean += w * points[i];
    }
    mean /= total;

    Matrix scatter = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double w = std::exp(logd[i] - peak);
        const Vector delta = points[i] - mean;
        scatter += w * delta * delta.transpose();
    }
    scatter /= total;
    return GaussianBelief(mean, cholesky(scatter));
}

BeliefGradient fd_gradient(const std::function<double(const GaussianBelief&)>& fn,
                           const GaussianBelief& at, double step) {
    if (!(step >= 1e-7) || !(step <= 1e-3))
        throw DomainError("fd_gradient: step must lie in [1e-7, 1e-3]");

    const int d = at.dim();
    BeliefGradient out;
    out.d_mean.resize(d);
    out.d_cov.resize(d, d);

    for (int i = 0; i < d; ++i) {
        Vector hi = at.mean(), lo = at.mean();
        hi(i) += step;
        lo(i) -= step;
        out.d_mean(i) = (fn(GaussianBelief(hi, at.cov())) -
                         fn(GaussianBelief(lo, at.cov()))) /
                        (2.0 * step);
    }

    const Matrix& sigma = at.cov().matrix();
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            Matrix e = Matrix::Zero(d, d);
            if (i == j)
                e(i, i) = 1.0;
            else
                e(i, j) = e(j, i) = 1.0;
            const double fp = fn(GaussianBelief(at.mean(), cholesky(sigma + step * e)));
            const double fm = fn(GaussianBelief(at.mean(), cholesky(sigma - step * e)));
            const double denom = (i == j) ? 2.0 * step : 4.0 * step;
            out.d_cov(i, j) = out.d_cov(j, i) = (fp - fm) / denom;
        }
    }
    return out;
}

KfResult reference_kf(const std::vector<Vector>& ys, const Matrix& F, const Matrix& Q,
                      const Matrix& H, const Matrix& R, const Vector& m0,
                      const Matrix& p0) {
    KfResult out;
    out.means.reserve(ys.size());
    out.covs.reserve(ys.size());

    Vector m = m0;
    Matrix p = p0;
    const Matrix eye = Matrix::Identity(m0.size(), m0.size());
    for (const Vector& y : ys) {
        m = F * m;
        p = F * p * F.transpose() + Q;
        const Matrix s = H * p * H.transpose() + R;
        const Matrix k = p * H.transpose() * s.inverse();
        m = m + k * (y - H * m);
        p = (eye - k * H) * p;
        p = 0.5 * (p + p.transpose());
        out.means.push_back(m);
        out.covs.push_back(p);
    }
    return out;
}

} // namespace oracle
} // namespace divkf
