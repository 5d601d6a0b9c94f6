#pragma once

#include "hive/common.hpp"
#include "hive/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>

namespace hive {

enum class ProjectionMethod { Pca, HeteroPca, Oracle, None };

inline std::string to_string(ProjectionMethod m) {
    switch (m) {
        case ProjectionMethod::Pca: return "pca";
        case ProjectionMethod::HeteroPca: return "heteropca";
        case ProjectionMethod::Oracle: return "oracle";
        case ProjectionMethod::None: return "none";
    }
    return "unknown";
}

/// Orthonormal basis of the estimated hidden-variable row space.
struct ProjectionEstimate {
    Matrix u_hat;  // m x k
    Index k = 0;
    ProjectionMethod method = ProjectionMethod::Pca;
    int heteropca_iterations = 0;
    Vector eigenvalues;  // top-k values used

    Matrix projector() const { return u_hat * u_hat.transpose(); }

    /// Y (I - U U^T) without forming the m x m projector.
    Matrix annihilate(const Matrix& y) const {
        if (k == 0) return y;
        return y - (y * u_hat) * u_hat.transpose();
    }
};

/// Flip each column so its largest-magnitude entry is positive (lowest index wins ties).
inline void canonicalize_signs(Matrix& u) {
    for (Index c = 0; c < u.cols(); ++c) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index r = 0; r < u.rows(); ++r) {
            double a = std::abs(u(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (u(best, c) < 0.0) u.col(c) = -u.col(c);
    }
}

inline void require_symmetric(const Matrix& sigma, const char* who) {
    require(sigma.rows() == sigma.cols(), std::string(who) + ": matrix must be square, got " + shape_str(sigma));
    require_finite(sigma, who);
    double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    require((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
            std::string(who) + ": matrix is not symmetric");
}

/// Eigenvalues in nonincreasing order.
inline Vector sorted_eigenvalues(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().reverse();
}

/// Top-k eigenvectors of a symmetric matrix.
inline ProjectionEstimate pca_projection(const Matrix& sigma, Index k) {
    require_symmetric(sigma, "pca_projection");
    const Index m = sigma.rows();
    require(k >= 1 && k < m, "pca_projection: k must satisfy 1 <= k < m (k=" + std::to_string(k) +
                                 ", m=" + std::to_string(m) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sigma + sigma.transpose()));
    ProjectionEstimate out;
    out.k = k;
    out.method = ProjectionMethod::Pca;
    // Eigen sorts ascending.
    out.u_hat = es.eigenvectors().rightCols(k).rowwise().reverse();
    out.eigenvalues = es.eigenvalues().tail(k).reverse();
    canonicalize_signs(out.u_hat);
    return out;
}

/// HeteroPCA: start from sigma with its diagonal zeroed, then repeatedly
/// replace the diagonal by that of the rank-k SVD truncation while keeping
/// the off-diagonal fixed. The output is the top-k left singular vectors of
/// the final iterate N^(T); T = 0 uses N^(0) directly. `observer`, if set,
/// sees every iterate N^(t) for t = 0..T.
inline ProjectionEstimate hetero_pca(const Matrix& sigma, Index k, int t_iters,
                                     const std::function<void(int, const Matrix&)>& observer = {}) {
    require_symmetric(sigma, "hetero_pca");
    const Index m = sigma.rows();
    require(k >= 1 && k < m, "hetero_pca: k must satisfy 1 <= k < m (k=" + std::to_string(k) +
                                 ", m=" + std::to_string(m) + ")");
    require(t_iters >= 0, "hetero_pca: t_iters must be nonnegative");

    Matrix nmat = sigma;
    nmat.diagonal().setZero();
    Eigen::JacobiSVD<Matrix> svd;
    for (int t = 0;; ++t) {
        if (observer) observer(t, nmat);
        svd.compute(nmat, Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (t == t_iters) break;
        const Matrix& u = svd.matrixU();
        const Matrix& v = svd.matrixV();
        const Vector& s = svd.singularValues();
        for (Index i = 0; i < m; ++i) {
            double d = 0.0;
            for (Index r = 0; r < k; ++r) d += s(r) * u(i, r) * v(i, r);
            nmat(i, i) = d;
        }
    }
    ProjectionEstimate out;
    out.k = k;
    out.method = ProjectionMethod::HeteroPca;
    out.heteropca_iterations = t_iters;
    out.u_hat = svd.matrixU().leftCols(k);
    out.eigenvalues = svd.singularValues().head(k);
    canonicalize_signs(out.u_hat);
    return out;
}

/// Projection onto the row space of a known k x m loading matrix.
inline ProjectionEstimate oracle_projection(const Matrix& b) {
    require_finite(b, "B");
    require(b.rows() >= 1 && b.rows() < b.cols(), "oracle projection: B must be k x m with 1 <= k < m");
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinV);
    const Vector& d = svd.singularValues();
    if (d(d.size() - 1) <= 1e-10 * d(0)) throw DataError("oracle projection: B is not of full row rank");
    ProjectionEstimate out;
    out.k = b.rows();
    out.method = ProjectionMethod::Oracle;
    out.u_hat = svd.matrixV();
    out.eigenvalues = d;
    canonicalize_signs(out.u_hat);
    return out;
}

/// The empty projection (k = 0): Y(I - P) = Y.
inline ProjectionEstimate null_projection(Index m) {
    ProjectionEstimate out;
    out.u_hat = Matrix::Zero(m, 0);
    out.k = 0;
    out.method = ProjectionMethod::None;
    return out;
}

struct RatioSelection {
    Index k = 1;
    Vector ratios;  // ratios(j-1) = lambda_j / max(lambda_{j+1}, floor)
};

/// argmax_{1<=j<=k_bar} lambda_j / max(lambda_{j+1}, floor_eps * lambda_1);
/// ties go to the smallest j.
inline RatioSelection select_k_ratio_detail(const Vector& eigenvalues, Index k_bar, double floor_eps = 1e-12) {
    require(k_bar >= 1, "select_k_ratio: k_bar must be at least 1");
    require(eigenvalues.size() >= k_bar + 1, "select_k_ratio: need at least k_bar+1 eigenvalues (k_bar=" +
                                                 std::to_string(k_bar) + ", have " +
                                                 std::to_string(eigenvalues.size()) + ")");
    require(floor_eps > 0.0, "select_k_ratio: floor_eps must be positive");
    double floor = floor_eps * std::max(eigenvalues(0), 0.0);
    if (floor <= 0.0) floor = std::numeric_limits<double>::min();
    RatioSelection sel;
    sel.ratios.resize(k_bar);
    double best = -1.0;
    for (Index j = 0; j < k_bar; ++j) {
        double num = std::max(eigenvalues(j), 0.0);
        double den = std::max(eigenvalues(j + 1), floor);
        sel.ratios(j) = num / den;
        if (sel.ratios(j) > best) {
            best = sel.ratios(j);
            sel.k = j + 1;
        }
    }
    return sel;
}

inline Index select_k_ratio(const Vector& eigenvalues, Index k_bar, double floor_eps = 1e-12) {
    return select_k_ratio_detail(eigenvalues, k_bar, floor_eps).k;
}

/// Default k_bar = floor(min(n, m) / 2), kept below m.
inline Index default_k_bar(Index n, Index m) {
    Index kb = std::min(n, m) / 2;
    return std::clamp<Index>(kb, 1, std::max<Index>(1, m - 1));
}

/// Linear-interpolation sample quantile (type 7).
inline double sample_quantile(std::vector<double> values, double q) {
    require(!values.empty(), "quantile of empty sample");
    std::sort(values.begin(), values.end());
    double h = (static_cast<double>(values.size()) - 1.0) * q;
    auto lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct ParallelAnalysis {
    Index k = 0;
    Vector observed;    // eigenvalues of the observed covariance
    Vector thresholds;  // per-index permutation-null quantiles
};

/// Parallel analysis: each replicate permutes every column independently,
/// destroying cross-column dependence. K is the length of the leading run of
/// observed eigenvalues exceeding the `quantile` of their permutation null.
inline ParallelAnalysis select_k_pa_detail(const Matrix& residuals, int n_perm, double quantile,
                                           std::uint64_t seed, unsigned threads = 1) {
    require(n_perm >= 1, "select_k_pa: n_perm must be at least 1");
    require(quantile > 0.0 && quantile < 1.0, "select_k_pa: quantile must lie in (0, 1)");
    require(residuals.rows() >= 2 && residuals.cols() >= 1, "select_k_pa: need at least 2 rows");
    require_finite(residuals, "residuals");
    const Index n = residuals.rows();
    const Index m = residuals.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    ParallelAnalysis pa;
    pa.observed = sorted_eigenvalues(residuals.transpose() * residuals * inv_n);

    std::vector<Vector> null_eigs(static_cast<std::size_t>(n_perm));
    parallel_for(static_cast<std::size_t>(n_perm), threads, [&](std::size_t b) {
        CounterRng rng(split_seed(seed, {static_cast<std::uint64_t>(b)}));
        Matrix perm(n, m);
        for (Index c = 0; c < m; ++c) {
            auto order = random_permutation(n, rng);
            for (Index i = 0; i < n; ++i) perm(i, c) = residuals(order[static_cast<std::size_t>(i)], c);
        }
        null_eigs[b] = sorted_eigenvalues(perm.transpose() * perm * inv_n);
    });

    pa.thresholds.resize(m);
    std::vector<double> column(static_cast<std::size_t>(n_perm));
    for (Index j = 0; j < m; ++j) {
        for (int b = 0; b < n_perm; ++b) column[static_cast<std::size_t>(b)] = null_eigs[static_cast<std::size_t>(b)](j);
        pa.thresholds(j) = sample_quantile(column, quantile);
    }
    while (pa.k < m && pa.observed(pa.k) > pa.thresholds(pa.k)) ++pa.k;
    return pa;
}

inline Index select_k_pa(const Matrix& residuals, int n_perm, double quantile, std::uint64_t seed,
                         unsigned threads = 1) {
    return select_k_pa_detail(residuals, n_perm, quantile, seed, threads).k;
}

}  // namespace hive
