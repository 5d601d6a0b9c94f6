#pragma once

#include "hive/common.hpp"
#include "hive/factor_recovery.hpp"
#include "hive/group_lasso.hpp"
#include "hive/stage1.hpp"
#include "hive/tuning.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

namespace hive {

/// Centering and scaling applied by standardize().
struct StandardizationRecord {
    Eigen::RowVectorXd x_center;
    Eigen::RowVectorXd x_scale;
    Eigen::RowVectorXd y_center;
    std::vector<Index> degenerate_columns;  // zero-variance X columns, scale left at 1
    bool applied = false;

    /// Coefficients fitted on standardized X expressed on the original X scale.
    Matrix to_original_scale(const Matrix& coef) const {
        if (!applied) return coef;
        return x_scale.transpose().cwiseInverse().asDiagonal() * coef;
    }
};

struct Standardized {
    Matrix x;
    Matrix y;
    StandardizationRecord record;
};

/// Centers and scales X columns to unit variance (divisor n); centers Y.
inline Standardized standardize(const Matrix& x, const Matrix& y) {
    require(x.rows() == y.rows(), "standardize: X and Y row counts differ");
    require(x.rows() >= 1, "standardize: empty data");
    const double n = static_cast<double>(x.rows());
    Standardized out;
    auto& rec = out.record;
    rec.applied = true;
    rec.x_center = x.colwise().mean();
    rec.y_center = y.colwise().mean();
    out.x = x.rowwise() - rec.x_center;
    out.y = y.rowwise() - rec.y_center;
    rec.x_scale = (out.x.colwise().squaredNorm() / n).cwiseSqrt();
    for (Index j = 0; j < x.cols(); ++j) {
        double s = rec.x_scale(j);
        if (!(s > 1e-12 * std::max(1.0, std::abs(rec.x_center(j))))) {
            rec.x_scale(j) = 1.0;
            out.x.col(j).setZero();
            rec.degenerate_columns.push_back(j);
        } else {
            out.x.col(j) /= s;
        }
    }
    return out;
}

/// Row-sparse estimate of the identifiable coefficient matrix.
struct ThetaEstimate {
    Matrix theta;
    std::vector<Index> support;
    double lambda3 = 0.0;
    double kkt_violation = 0.0;
    bool converged = true;
    int iterations = 0;
    ProjectionEstimate projection;
};

/// Group lasso of the projected response Y (I - P) on X.
inline ThetaEstimate fit_theta_projected(const Matrix& x, const Matrix& y, const ProjectionEstimate& projection,
                                         double lambda3, const GroupLassoOptions& solver = {}) {
    require(x.rows() == y.rows(), "fit_theta_projected: X and Y row counts differ");
    require(projection.u_hat.rows() == y.cols(), "fit_theta_projected: projection is " +
                                                     shape_str(projection.u_hat) + " but Y has " +
                                                     std::to_string(y.cols()) + " columns");
    GroupLassoResult r = fit_group_lasso(x, projection.annihilate(y), lambda3, solver);
    ThetaEstimate out;
    out.theta = std::move(r.coef);
    out.support = std::move(r.support);
    out.lambda3 = lambda3;
    out.kkt_violation = r.kkt_violation;
    out.converged = r.converged;
    out.iterations = r.iterations;
    out.projection = projection;
    return out;
}

enum class KMethod { Ratio, Pa, Auto };
enum class TuneMode { Grid, Sequential };

inline KMethod parse_k_method(const std::string& s) {
    if (s == "ratio") return KMethod::Ratio;
    if (s == "pa") return KMethod::Pa;
    if (s == "auto") return KMethod::Auto;
    throw InvalidArgument("unknown K selection method '" + s + "' (expected ratio, pa or auto)");
}

inline std::string to_string(KMethod k) {
    switch (k) {
        case KMethod::Ratio: return "ratio";
        case KMethod::Pa: return "pa";
        case KMethod::Auto: return "auto";
    }
    return "unknown";
}

inline TuneMode parse_tune_mode(const std::string& s) {
    if (s == "grid") return TuneMode::Grid;
    if (s == "sequential") return TuneMode::Sequential;
    throw InvalidArgument("unknown tuning mode '" + s + "' (expected grid or sequential)");
}

inline std::string to_string(TuneMode t) { return t == TuneMode::Grid ? "grid" : "sequential"; }

struct KSelectionRecord {
    KMethod method = KMethod::Ratio;  // resolved method (never Auto)
    Index k = 0;
    Index k_bar = 0;
    Vector eigenvalues;
    Vector ratios;       // ratio method
    Vector thresholds;   // pa method
    int n_perm = 0;
    double quantile = 0.0;
};

struct HiveOptions {
    std::optional<Index> k;  // empty: select with k_method
    KMethod k_method = KMethod::Auto;
    std::optional<Index> k_bar;
    int pa_permutations = 100;
    double pa_quantile = 0.95;
    bool allow_no_hidden = false;

    bool hetero = false;
    int t_iters = 5;

    std::optional<double> lambda1;
    std::optional<double> lambda2;
    std::optional<double> lambda3;
    TuneMode tune = TuneMode::Grid;
    int folds = 10;
    double c0 = 4.0;
    std::vector<double> grid1;
    std::vector<double> grid2;
    std::vector<double> grid3;

    bool standardize = true;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    Stage1Options stage1{};
};

struct HiveFit {
    Stage1Fit stage1;
    ProjectionEstimate projection;
    ThetaEstimate theta;
    Index k_used = 0;
    std::optional<KSelectionRecord> k_selection;
    StandardizationRecord standardization;
    TuningRecord tuning;

    Matrix theta_original() const { return standardization.to_original_scale(theta.theta); }
    Matrix psi_original() const { return standardization.to_original_scale(stage1.psi_hat); }
    Matrix l_original() const { return standardization.to_original_scale(stage1.l_hat); }
};

/// Selects K from a stage-1 fit.
inline KSelectionRecord select_k(const Stage1Fit& fit, KMethod method, std::optional<Index> k_bar, int n_perm,
                                 double quantile, std::uint64_t seed, unsigned threads = 1) {
    const Index n = fit.residuals.rows();
    const Index m = fit.residuals.cols();
    require(m >= 2, "K selection needs at least 2 responses");
    if (method == KMethod::Auto) method = m > 25 ? KMethod::Ratio : KMethod::Pa;
    KSelectionRecord rec;
    rec.method = method;
    rec.eigenvalues = sorted_eigenvalues(fit.sigma_eps_hat);
    if (method == KMethod::Ratio) {
        rec.k_bar = k_bar.value_or(default_k_bar(n, m));
        require(rec.k_bar >= 1 && rec.k_bar < m, "k_bar must satisfy 1 <= k_bar < m");
        auto sel = select_k_ratio_detail(rec.eigenvalues, rec.k_bar);
        rec.k = sel.k;
        rec.ratios = sel.ratios;
    } else {
        auto pa = select_k_pa_detail(fit.residuals, n_perm, quantile, split_seed(seed, {0x9a}), threads);
        rec.k = pa.k;
        rec.thresholds = pa.thresholds;
        rec.n_perm = n_perm;
        rec.quantile = quantile;
    }
    return rec;
}

/// HIVE (PCA projection) or H-HIVE (HeteroPCA projection, opts.hetero):
/// stage-1 fit, residual covariance, projection, projected group lasso.
inline HiveFit fit_hive(const Matrix& x_in, const Matrix& y_in, const HiveOptions& opts) {
    require_finite(x_in, "X");
    require_finite(y_in, "Y");
    require(x_in.rows() == y_in.rows(), "X has " + std::to_string(x_in.rows()) + " rows but Y has " +
                                            std::to_string(y_in.rows()));
    const Index m = y_in.cols();
    require(m >= 2, "Y must have at least 2 columns");
    if (opts.k) require(*opts.k >= 1 && *opts.k < m, "k must satisfy 1 <= k < m (k=" + std::to_string(*opts.k) +
                                                         ", m=" + std::to_string(m) + ")");
    require(opts.lambda1.has_value() == opts.lambda2.has_value(),
            "lambda1 and lambda2 must be given together (or both tuned)");
    require(opts.t_iters >= 0, "t_iters must be nonnegative");

    HiveFit out;
    Matrix x, y;
    if (opts.standardize) {
        Standardized s = standardize(x_in, y_in);
        x = std::move(s.x);
        y = std::move(s.y);
        out.standardization = std::move(s.record);
    } else {
        x = x_in;
        y = y_in;
    }

    CvOptions cv;
    cv.folds = opts.folds;
    cv.seed = opts.seed;
    cv.threads = opts.threads;
    cv.stage1 = opts.stage1;

    out.tuning.folds = opts.folds;
    out.tuning.seed = opts.seed;

    // Step 1: stage-1 fit.
    double lambda1, lambda2;
    if (opts.lambda1) {
        lambda1 = *opts.lambda1;
        lambda2 = *opts.lambda2;
    } else {
        std::vector<double> grid2 = opts.grid2.empty() ? default_lambda2_grid(x) : opts.grid2;
        Stage1Tuning t;
        if (opts.tune == TuneMode::Grid) {
            std::vector<double> grid1 = opts.grid1.empty() ? default_lambda1_grid(x, y, grid2) : opts.grid1;
            t = cv_tune_stage1(x, y, grid1, grid2, cv);
        } else {
            t = sequential_tune(x, y, grid2, opts.c0, opts.grid1, cv);
        }
        lambda1 = t.lambda1;
        lambda2 = t.lambda2;
        for (auto& st : t.record.stages) out.tuning.stages.push_back(std::move(st));
    }
    out.tuning.lambda1 = lambda1;
    out.tuning.lambda2 = lambda2;
    out.stage1 = fit_stage1(x, y, lambda1, lambda2, opts.stage1);

    // Steps 2-3: residual covariance and projection.
    Index k;
    if (opts.k) {
        k = *opts.k;
    } else {
        KSelectionRecord rec =
            select_k(out.stage1, opts.k_method, opts.k_bar, opts.pa_permutations, opts.pa_quantile, opts.seed, opts.threads);
        k = std::min<Index>(rec.k, m - 1);
        rec.k = k;
        out.k_selection = rec;
        if (k == 0 && !opts.allow_no_hidden)
            throw NoHiddenVariables(
                "K selection found no hidden variables; supply k explicitly or allow the plain group-lasso "
                "fallback");
    }
    if (k == 0) {
        out.projection = null_projection(m);
    } else if (opts.hetero) {
        out.projection = hetero_pca(out.stage1.sigma_eps_hat, k, opts.t_iters);
    } else {
        out.projection = pca_projection(out.stage1.sigma_eps_hat, k);
    }
    out.k_used = out.projection.k;

    // Step 4: projected group lasso.
    double lambda3;
    if (opts.lambda3) {
        lambda3 = *opts.lambda3;
    } else {
        PenaltyTuning t = cv_tune_lambda3(x, y, out.projection, opts.grid3, cv);
        lambda3 = t.lambda;
        out.tuning.projection_fixed_across_folds = true;
        for (auto& st : t.record.stages) out.tuning.stages.push_back(std::move(st));
    }
    out.tuning.lambda3 = lambda3;
    out.theta = fit_theta_projected(x, y, out.projection, lambda3, opts.stage1.solver);
    return out;
}

inline HiveFit fit_hhive(const Matrix& x, const Matrix& y, HiveOptions opts) {
    opts.hetero = true;
    return fit_hive(x, y, opts);
}

}  // namespace hive
