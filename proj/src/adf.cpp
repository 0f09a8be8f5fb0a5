#include "divkf/adf.hpp"

#include <cmath>

namespace divkf {

double default_ukf_lambda(int dim) {
    if (dim <= 0) throw DimensionError("default_ukf_lambda: dim must be positive");
    return dim < 3 ? 3.0 - dim : 1.0;
}

GaussianBelief predict(const GaussianBelief& prior, const LinearDynamics& dyn) {
    if (dyn.F.rows() != dyn.F.cols() || dyn.F.rows() != prior.dim() ||
        dyn.Q.dim() != prior.dim())
        throw DimensionError("predict: dynamics do not match belief dimension");
    const Matrix cov =
        dyn.F * prior.cov().matrix() * dyn.F.transpose() + dyn.Q.matrix();
    return GaussianBelief(dyn.F * prior.mean(), cholesky(cov));
}

GaussianBelief joint_gaussian_update(const GaussianBelief& prior,
                                     const JointGaussianStats& stats,
                                     const Vector& y,
                                     const std::vector<int>& wrap_components) {
    const int d = prior.dim();
    const int p = stats.Sigma_yy.dim();
    if (stats.mu_y.size() != p || y.size() != p || stats.Sigma_xy.rows() != d ||
        stats.Sigma_xy.cols() != p)
        throw DimensionError("joint_gaussian_update: inconsistent statistics");

    Vector r = y - stats.mu_y;
    for (int i : wrap_components) {
        if (i < 0 || i >= p)
            throw DimensionError("joint_gaussian_update: wrap component out of range");
        r(i) = wrap_angle(r(i));
    }

    // K = Sigma_xy Sigma_yy^-1, computed through the factor of Sigma_yy.
    const Matrix K = stats.Sigma_yy.solve(stats.Sigma_xy.transpose()).transpose();
    const Vector mean = prior.mean() + K * r;
    const Matrix cov = prior.cov().matrix() -
                       K * stats.Sigma_yy.matrix() * K.transpose();
    return GaussianBelief(mean, cholesky(cov));
}

JointGaussianStats ekf_stats(const GaussianBelief& prior, const MeasurementModel& model) {
    if (model.state_dim() != prior.dim())
        throw DimensionError("ekf_stats: model does not match belief dimension");
    const Matrix H = model.jacobian(prior.mean());
    const Matrix& Sigma = prior.cov().matrix();
    const Matrix Syy = H * Sigma * H.transpose() + model.noise().matrix();
    return JointGaussianStats{model.h(prior.mean()), cholesky(Syy),
                              Sigma * H.transpose()};
}

SigmaPoints sigma_points(const GaussianBelief& belief, double lambda) {
    const int d = belief.dim();
    if (!(d + lambda > 0.0))
        throw DomainError("sigma_points: requires d + lambda > 0");
    const double scale = std::sqrt(d + lambda);
    const Matrix offsets = scale * belief.cov().factor(); // chol((d+lambda) Sigma)

    SigmaPoints sp;
    sp.lambda = lambda;
    sp.points.resize(d, 2 * d + 1);
    sp.weights.resize(2 * d + 1);
    sp.points.col(0) = belief.mean();
    sp.weights(0) = lambda / (d + lambda);
    for (int s = 0; s < d; ++s) {
        sp.points.col(1 + s) = belief.mean() + offsets.col(s);
        sp.points.col(1 + d + s) = belief.mean() - offsets.col(s);
        sp.weights(1 + s) = sp.weights(1 + d + s) = 0.5 / (d + lambda);
    }
    return sp;
}

JointGaussianStats ukf_stats(const GaussianBelief& prior, const MeasurementModel& model,
                             double lambda) {
    if (model.state_dim() != prior.dim())
        throw DimensionError("ukf_stats: model does not match belief dimension");
    const SigmaPoints sp = sigma_points(prior, lambda);
    const int n = static_cast<int>(sp.points.cols());
    const int p = model.measurement_dim();

    Matrix Y(p, n);
    for (int s = 0; s < n; ++s) Y.col(s) = model.h(sp.points.col(s));

    Vector mu_y = Y * sp.weights;
    for (int i : model.wrap_components()) {
        double sin_sum = 0.0, cos_sum = 0.0;
        for (int s = 0; s < n; ++s) {
            sin_sum += sp.weights(s) * std::sin(Y(i, s));
            cos_sum += sp.weights(s) * std::cos(Y(i, s));
        }
        mu_y(i) = std::atan2(sin_sum, cos_sum);
    }

    Matrix Syy = model.noise().matrix();
    Matrix Sxy = Matrix::Zero(prior.dim(), p);
    for (int s = 0; s < n; ++s) {
        Vector dy = Y.col(s) - mu_y;
        for (int i : model.wrap_components()) dy(i) = wrap_angle(dy(i));
        const Vector dx = sp.points.col(s) - prior.mean();
        Syy += sp.weights(s) * dy * dy.transpose();
        Sxy += sp.weights(s) * dx * dy.transpose();
    }
    return JointGaussianStats{mu_y, cholesky(Syy), Sxy};
}

} // namespace divkf
