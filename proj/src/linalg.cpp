#include "divkf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace divkf {

namespace {

constexpr double kPivotFloor = 1e-12;

// Plain lower Cholesky; returns false when a pivot drops to or below the
// floor. The floor scales with sqrt(max diagonal) so that well-conditioned
// matrices are accepted at any magnitude (a variance of 1e-250 is still
// positive definite). Small dense problems only (d <= ~50), so no pivoting
// or blocking.
bool try_factor(const Matrix& m, Matrix& lower) {
    const int n = static_cast<int>(m.rows());
    const double floor = kPivotFloor * std::sqrt(std::max(m.diagonal().maxCoeff(), 0.0));
    lower = Matrix::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        double diag = m(j, j) - lower.row(j).head(j).squaredNorm();
        if (!(diag > 0.0)) return false;
        diag = std::sqrt(diag);
        if (!(diag > floor)) return false;
        lower(j, j) = diag;
        for (int i = j + 1; i < n; ++i) {
            const double s = m(i, j) - lower.row(i).head(j).dot(lower.row(j).head(j));
            lower(i, j) = s / diag;
        }
    }
    return true;
}

} // namespace

SpdMatrix cholesky(const Matrix& m) {
    if (m.rows() != m.cols())
        throw DimensionError("cholesky: matrix is not square");
    if (!m.allFinite())
        throw DomainError("cholesky: matrix has non-finite entries");

    const double scale = m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-6 * std::max(1.0, scale))
        throw DomainError("cholesky: matrix is not symmetric within tolerance");

    SpdMatrix out;
    out.m_ = 0.5 * (m + m.transpose());
    if (try_factor(out.m_, out.factor_)) return out;

    // One jitter retry: 1e-9 * trace / d on the diagonal.
    const int n = static_cast<int>(m.rows());
    const double jitter = 1e-9 * out.m_.trace() / n;
    out.m_.diagonal().array() += jitter;
    out.jittered_ = true;
    if (jitter > 0.0 && try_factor(out.m_, out.factor_)) return out;

    std::ostringstream msg;
    msg << "cholesky: matrix of dim " << n
        << " not positive definite after jitter " << jitter;
    throw NotPositiveDefinite(msg.str());
}

SpdMatrix SpdMatrix::identity(int dim) {
    return cholesky(Matrix::Identity(dim, dim));
}

SpdMatrix SpdMatrix::diagonal(const Vector& variances) {
    return cholesky(Matrix(variances.asDiagonal()));
}

SpdMatrix SpdMatrix::isotropic(int dim, double scale) {
    return cholesky(Matrix(scale * Matrix::Identity(dim, dim)));
}

Vector SpdMatrix::solve(const Vector& b) const {
    Vector y = factor_.triangularView<Eigen::Lower>().solve(b);
    return factor_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix SpdMatrix::solve(const Matrix& b) const {
    Matrix y = factor_.triangularView<Eigen::Lower>().solve(b);
    return factor_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix SpdMatrix::inverse() const {
    return solve(Matrix(Matrix::Identity(dim(), dim())));
}

double SpdMatrix::quad_form(const Vector& v) const {
    return factor_.triangularView<Eigen::Lower>().solve(v).squaredNorm();
}

double SpdMatrix::log_det() const {
    return 2.0 * factor_.diagonal().array().log().sum();
}

namespace {

// Regularized lower incomplete gamma, series for x < a+1 and continued
// fraction otherwise (Lentz). Relative accuracy ~1e-14 over the range the
// chi-squared quantile needs.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int k = 0; k < 500; ++k) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double regularized_gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_contfrac(a, x);
}

double chi2_quantile(int d, double p) {
    if (d < 1) throw DomainError("chi2_quantile: d must be >= 1");
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("chi2_quantile: p must lie in (0, 1)");

    static std::map<std::pair<int, long long>, double> cache;
    static std::mutex cache_mutex;
    const auto key = std::make_pair(d, static_cast<long long>(p * 1e15));
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }

    const double a = 0.5 * d;
    auto cdf = [&](double x) { return regularized_gamma_p(a, 0.5 * x); };

    // Bracket then bisect; 200 halvings push relative error far below 1e-6.
    double lo = 0.0, hi = std::max(1.0, static_cast<double>(d));
    while (cdf(hi) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) < p ? lo : hi) = mid;
        if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
    }
    const double q = 0.5 * (lo + hi);

    std::lock_guard<std::mutex> lock(cache_mutex);
    cache.emplace(key, q);
    return q;
}

} // namespace divkf
