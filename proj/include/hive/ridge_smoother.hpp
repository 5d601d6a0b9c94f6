#pragma once

#include "hive/common.hpp"

#include <cmath>

namespace hive {

/// Thin SVD X = U diag(d) V^T truncated to numerical rank q.
struct DesignFactorization {
    Matrix left_basis;       // n x q
    Vector singular_values;  // q, nonincreasing, strictly positive
    Matrix right_basis;      // p x q
    Index n = 0;
    Index p = 0;

    Index rank() const { return singular_values.size(); }

    /// Eigenvalues sigma_k = d_k^2 / n of X^T X / n.
    Vector gram_eigenvalues() const {
        return singular_values.array().square() / static_cast<double>(n);
    }
};

inline DesignFactorization factorize_design(const Matrix& x, double rank_tol = 1e-10) {
    require_finite(x, "design matrix");
    require(x.rows() > 0 && x.cols() > 0, "design matrix must be nonempty");
    require(rank_tol >= 0.0, "rank tolerance must be nonnegative");

    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& d = svd.singularValues();
    Index q = 0;
    const double cutoff = d.size() > 0 ? rank_tol * d(0) : 0.0;
    while (q < d.size() && d(q) > cutoff && d(q) > 0.0) ++q;

    DesignFactorization f;
    f.n = x.rows();
    f.p = x.cols();
    f.left_basis = svd.matrixU().leftCols(q);
    f.singular_values = d.head(q);
    f.right_basis = svd.matrixV().leftCols(q);
    return f;
}

enum class SmootherMode { P, Q, QHalf };

/// Result of a ridge solve through the factorization.
struct RidgeSolve {
    Matrix coef;
    /// lambda2 = 0 on a rank-deficient design: the Moore-Penrose solution was used.
    bool pseudo_inverse = false;
};

/// The ridge hat matrix P = X (X^T X + n lambda2 I)^{-1} X^T, its complement
/// Q = I - P and the principal square root of Q, all applied through the thin
/// factorization. Nothing n x n is ever formed. Immutable once built.
class RidgeSmoother {
public:
    RidgeSmoother(DesignFactorization factorization, double lambda2)
        : fac_(std::move(factorization)), lambda2_(lambda2) {
        require(std::isfinite(lambda2) && lambda2 >= 0.0, "lambda2 must be finite and nonnegative");
        const double nl = static_cast<double>(fac_.n) * lambda2_;
        const Vector d2 = fac_.singular_values.array().square();
        p_eigs_ = d2.array() / (d2.array() + nl);
        q_eigs_ = nl / (d2.array() + nl);
        qhalf_gap_ = 1.0 - q_eigs_.array().sqrt();
        solve_weights_ = fac_.singular_values.array() / (d2.array() + nl);
    }

    const DesignFactorization& factorization() const { return fac_; }
    double lambda2() const { return lambda2_; }
    Index n() const { return fac_.n; }
    Index p() const { return fac_.p; }
    Index rank() const { return fac_.rank(); }

    /// d_k^2 / (d_k^2 + n lambda2)
    const Vector& p_eigs() const { return p_eigs_; }
    /// n lambda2 / (d_k^2 + n lambda2)
    const Vector& q_eigs() const { return q_eigs_; }

    double trace_p() const { return p_eigs_.sum(); }

    bool rank_deficient() const { return rank() < std::min(fac_.n, fac_.p); }

    Matrix apply(SmootherMode mode, const Matrix& m) const {
        require(m.rows() == fac_.n, "smoother expects " + std::to_string(fac_.n) +
                                        " rows, got " + std::to_string(m.rows()));
        const Matrix& u = fac_.left_basis;
        Matrix coords = u.transpose() * m;
        switch (mode) {
            case SmootherMode::P:
                return u * (p_eigs_.asDiagonal() * coords);
            case SmootherMode::Q:
                return m - u * (p_eigs_.asDiagonal() * coords);
            case SmootherMode::QHalf:
                return m - u * (qhalf_gap_.asDiagonal() * coords);
        }
        return m;
    }

    /// (X^T X + n lambda2 I)^{-1} X^T R, i.e. V diag(d/(d^2 + n lambda2)) U^T R.
    RidgeSolve backsolve(const Matrix& r) const {
        require(r.rows() == fac_.n, "ridge backsolve expects " + std::to_string(fac_.n) + " rows");
        RidgeSolve out;
        out.coef = fac_.right_basis * (solve_weights_.asDiagonal() * (fac_.left_basis.transpose() * r));
        out.pseudo_inverse = lambda2_ == 0.0 && rank_deficient();
        return out;
    }

    /// diag of M = X^T Q^2 X / n, computed as sum_k V_jk^2 d_k^2 q_k^2 / n.
    Vector m_diagonal() const {
        Vector w = (fac_.singular_values.array() * q_eigs_.array()).square() / static_cast<double>(fac_.n);
        return fac_.right_basis.array().square().matrix() * w;
    }

private:
    DesignFactorization fac_;
    double lambda2_;
    Vector p_eigs_;
    Vector q_eigs_;
    Vector qhalf_gap_;
    Vector solve_weights_;
};

inline RidgeSmoother build_smoother(const Matrix& x, double lambda2, double rank_tol = 1e-10) {
    require(std::isfinite(lambda2) && lambda2 >= 0.0, "lambda2 must be finite and nonnegative");
    return RidgeSmoother(factorize_design(x, rank_tol), lambda2);
}

inline Matrix apply_smoother(const RidgeSmoother& s, SmootherMode mode, const Matrix& m) {
    return s.apply(mode, m);
}

inline RidgeSolve ridge_backsolve(const RidgeSmoother& s, const Matrix& r) { return s.backsolve(r); }

}  // namespace hive
