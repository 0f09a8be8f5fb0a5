#pragma once

#include <Eigen/Dense>

#include "divkf/errors.hpp"

namespace divkf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric positive definite matrix with a cached lower Cholesky factor.
///
/// Construction always goes through the jitter policy: the input is
/// symmetrized as (M + M^T)/2, factored, and on failure 1e-9 * trace(M)/d is
/// added to the diagonal once before a single retry. Pivots (diagonal
/// entries of L) must exceed 1e-12 * sqrt(max diagonal of M) or
/// NotPositiveDefinite is thrown; the relative floor keeps well-conditioned
/// matrices factorable at any scale. Immutable after construction.
class SpdMatrix {
public:
    SpdMatrix() = default;

    static SpdMatrix identity(int dim);

    /// Diagonal SPD matrix from per-axis variances.
    static SpdMatrix diagonal(const Vector& variances);

    /// Isotropic scale * I.
    static SpdMatrix isotropic(int dim, double scale);

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& matrix() const { return m_; }
    const Matrix& factor() const { return factor_; }
    bool jittered() const { return jittered_; }

    /// Solves M x = b through the Cholesky factor.
    Vector solve(const Vector& b) const;
    Matrix solve(const Matrix& b) const;

    /// Expression overload: evaluates, then solves.
    template <typename Derived>
    auto solve(const Eigen::MatrixBase<Derived>& b) const {
        if constexpr (Derived::ColsAtCompileTime == 1)
            return solve(Vector(b));
        else
            return solve(Matrix(b));
    }

    Matrix inverse() const;

    /// v^T M^{-1} v.
    double quad_form(const Vector& v) const;

    /// log |M|, from the factor diagonal.
    double log_det() const;

    friend SpdMatrix cholesky(const Matrix& m);

private:
    Matrix m_;
    Matrix factor_; // lower triangular
    bool jittered_ = false;
};

/// Factors a (nearly) symmetric matrix into an SpdMatrix.
///
/// Throws DimensionError for non-square input, DomainError for gross
/// asymmetry, NotPositiveDefinite when the jittered retry still fails.
SpdMatrix cholesky(const Matrix& m);

/// Quantile of the chi-squared distribution with d degrees of freedom,
/// accurate to 1e-6 relative. Values are cached per (d, p).
double chi2_quantile(int d, double p);

/// Regularized lower incomplete gamma P(a, x); exposed because the
/// chi-squared CDF is P(d/2, x/2).
double regularized_gamma_p(double a, double x);

} // namespace divkf
