#pragma once

#include "hive/common.hpp"
#include "hive/group_lasso.hpp"
#include "hive/ridge_smoother.hpp"

#include <optional>

namespace hive {

struct Stage1Options {
    GroupLassoOptions solver{};
    double rank_tol = 1e-10;
    /// Transformed columns with squared norm below this fraction of the
    /// original column's squared norm are annihilated by Q and forced to zero.
    double annihilated_column_tol = 1e-20;
};

/// Sparse-plus-dense first stage: F = Psi + L with Psi row-sparse.
struct Stage1Fit {
    Matrix psi_hat;        // p x m
    Matrix l_hat;          // p x m
    Matrix f_hat;          // p x m, psi_hat + l_hat
    Matrix fitted;         // n x m, X f_hat
    Matrix residuals;      // n x m, Y - fitted
    Matrix sigma_eps_hat;  // m x m, residuals^T residuals / n
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::vector<Index> psi_support;
    double kkt_violation = 0.0;  // of the transformed group-lasso problem
    bool converged = true;
    int iterations = 0;
    bool pseudo_inverse = false;      // lambda2 = 0 on a rank-deficient design
    bool degenerate_covariance = false;  // lambda1 = lambda2 = 0 with n <= p
};

inline Matrix residual_covariance(const Matrix& residuals) {
    Matrix s = residuals.transpose() * residuals / static_cast<double>(residuals.rows());
    return 0.5 * (s + s.transpose());
}

inline Matrix residual_covariance(const Stage1Fit& fit) { return residual_covariance(fit.residuals); }

/// (1/n)||Y - X(Psi + L)||_F^2 + lambda1 ||Psi||_{l1/l2} + lambda2 ||L||_F^2
inline double stage1_objective(const Matrix& x, const Matrix& y, double lambda1, double lambda2,
                               const Matrix& psi, const Matrix& l) {
    const double n = static_cast<double>(x.rows());
    return (y - x * (psi + l)).squaredNorm() / n + lambda1 * row_l1l2_norm(psi) + lambda2 * l.squaredNorm();
}

/// Q^{1/2} X, Q^{1/2} Y for the group-lasso reduction.
struct TransformedProblem {
    Matrix x;
    Matrix y;
    double zero_column_tol = 0.0;
};

inline TransformedProblem transform_problem(const RidgeSmoother& s, const Matrix& x, const Matrix& y,
                                            double annihilated_column_tol) {
    TransformedProblem t;
    t.x = s.apply(SmootherMode::QHalf, x);
    t.y = s.apply(SmootherMode::QHalf, y);
    double max_col = x.colwise().squaredNorm().maxCoeff();
    t.zero_column_tol = annihilated_column_tol * max_col;
    return t;
}

/// Uses a prebuilt smoother so that lambda1 paths share one factorization.
inline Stage1Fit fit_stage1(const RidgeSmoother& smoother, const Matrix& x, const Matrix& y, double lambda1,
                            const Stage1Options& opts = {}, const std::optional<Matrix>& warm_start = std::nullopt) {
    require_finite(x, "X");
    require_finite(y, "Y");
    require(x.rows() == y.rows(), "stage 1: X has " + std::to_string(x.rows()) + " rows but Y has " +
                                      std::to_string(y.rows()));
    require(smoother.n() == x.rows() && smoother.p() == x.cols(), "stage 1: smoother built for a different design");
    require(std::isfinite(lambda1) && lambda1 >= 0.0, "stage 1: lambda1 must be finite and nonnegative");

    TransformedProblem t = transform_problem(smoother, x, y, opts.annihilated_column_tol);
    GroupLassoOptions gl = opts.solver;
    gl.zero_column_tol = std::max(gl.zero_column_tol, t.zero_column_tol);
    GroupLassoResult g = fit_group_lasso(t.x, t.y, lambda1, gl, warm_start);

    Stage1Fit fit;
    fit.lambda1 = lambda1;
    fit.lambda2 = smoother.lambda2();
    fit.psi_hat = std::move(g.coef);
    fit.psi_support = std::move(g.support);
    fit.kkt_violation = g.kkt_violation;
    fit.converged = g.converged;
    fit.iterations = g.iterations;

    RidgeSolve rs = smoother.backsolve(y - x * fit.psi_hat);
    fit.l_hat = std::move(rs.coef);
    fit.pseudo_inverse = rs.pseudo_inverse;
    fit.f_hat = fit.psi_hat + fit.l_hat;
    fit.fitted = x * fit.f_hat;
    fit.residuals = y - fit.fitted;
    fit.sigma_eps_hat = residual_covariance(fit.residuals);
    fit.degenerate_covariance = lambda1 == 0.0 && smoother.lambda2() == 0.0 && x.rows() <= x.cols();
    return fit;
}

inline Stage1Fit fit_stage1(const Matrix& x, const Matrix& y, double lambda1, double lambda2,
                            const Stage1Options& opts = {}) {
    require(std::isfinite(lambda2) && lambda2 >= 0.0, "stage 1: lambda2 must be finite and nonnegative");
    RidgeSmoother s = build_smoother(x, lambda2, opts.rank_tol);
    return fit_stage1(s, x, y, lambda1, opts);
}

/// lambda1 above which Psi = 0 for a given smoother.
inline double stage1_null_threshold(const RidgeSmoother& s, const Matrix& x, const Matrix& y) {
    Matrix xt = s.apply(SmootherMode::QHalf, x);
    Matrix yt = s.apply(SmootherMode::QHalf, y);
    return group_lasso_null_threshold(xt, yt);
}

}  // namespace hive
