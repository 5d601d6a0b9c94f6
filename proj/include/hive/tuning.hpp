#pragma once

#include "hive/common.hpp"
#include "hive/factor_recovery.hpp"
#include "hive/group_lasso.hpp"
#include "hive/rng.hpp"
#include "hive/stage1.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

namespace hive {

/// One searched grid: parameter tuples, per-fold held-out MSE, their means.
struct TuningStage {
    std::string name;
    std::vector<std::string> params;
    std::vector<std::vector<double>> points;
    std::vector<std::vector<double>> fold_errors;  // [point][fold]
    std::vector<double> mean_errors;
    std::size_t selected = 0;
};

struct TuningRecord {
    std::optional<double> lambda1;
    std::optional<double> lambda2;
    std::optional<double> lambda3;
    int folds = 0;
    std::uint64_t seed = 0;
    std::vector<TuningStage> stages;
    bool projection_fixed_across_folds = false;
};

struct CvOptions {
    int folds = 10;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    Stage1Options stage1{};
};

/// Seeded shuffle, then contiguous blocks. fold_of[i] is the fold of row i.
inline std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed) {
    require(folds >= 2, "cross-validation needs at least 2 folds");
    require(n >= folds, "cross-validation: n (" + std::to_string(n) + ") is smaller than folds (" +
                            std::to_string(folds) + ")");
    CounterRng rng(split_seed(seed, {0xf01d}));
    auto perm = random_permutation(n, rng);
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (Index pos = 0; pos < n; ++pos) {
        int f = static_cast<int>(pos * folds / n);
        fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = f;
    }
    return fold_of;
}

struct FoldSplit {
    std::vector<Index> train;
    std::vector<Index> test;
};

inline std::vector<FoldSplit> make_splits(const std::vector<int>& fold_of, int folds) {
    std::vector<FoldSplit> splits(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        for (int f = 0; f < folds; ++f) {
            auto& s = splits[static_cast<std::size_t>(f)];
            (fold_of[i] == f ? s.test : s.train).push_back(static_cast<Index>(i));
        }
    }
    return splits;
}

inline double heldout_mse(const Matrix& x_test, const Matrix& y_test, const Matrix& coef) {
    return (y_test - x_test * coef).squaredNorm() / static_cast<double>(y_test.size());
}

/// Minimum mean error; among ties (relative 1e-12) the point with the largest
/// penalty tuple in lexicographic order wins.
inline std::size_t select_min_largest_penalty(const TuningStage& st) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < st.mean_errors.size(); ++i) {
        double a = st.mean_errors[i];
        double b = st.mean_errors[best];
        double tol = 1e-12 * std::max(std::abs(a), std::abs(b));
        if (a < b - tol) {
            best = i;
        } else if (std::abs(a - b) <= tol && st.points[i] > st.points[best]) {
            best = i;
        }
    }
    return best;
}

inline std::vector<double> log_grid(double hi, double lo, int count) {
    require(count >= 1 && hi > 0.0 && lo > 0.0, "log grid needs positive bounds");
    std::vector<double> g(static_cast<std::size_t>(count));
    if (count == 1) {
        g[0] = hi;
        return g;
    }
    for (int i = 0; i < count; ++i) {
        double t = static_cast<double>(i) / (count - 1);
        g[static_cast<std::size_t>(i)] = std::exp(std::log(hi) + t * (std::log(lo) - std::log(hi)));
    }
    return g;
}

/// lambda2 grid spanning the design spectrum: mean(sigma_k) * 10^[-3, 2].
inline std::vector<double> default_lambda2_grid(const Matrix& x, int count = 8) {
    DesignFactorization f = factorize_design(x);
    double scale = f.rank() > 0 ? f.gram_eigenvalues().mean() : 1.0;
    return log_grid(scale * 1e2, scale * 1e-3, count);
}

/// lambda1 grid from the largest stage-1 null threshold over grid2 down three decades.
inline std::vector<double> default_lambda1_grid(const Matrix& x, const Matrix& y, const std::vector<double>& grid2,
                                                int count = 10) {
    DesignFactorization f = factorize_design(x);
    double top = 0.0;
    for (double l2 : grid2) top = std::max(top, stage1_null_threshold(RidgeSmoother(f, l2), x, y));
    if (top <= 0.0) top = 1.0;
    return log_grid(top, top * 1e-3, count);
}

inline std::vector<double> default_lambda3_grid(const Matrix& x, const Matrix& y_projected, int count = 12) {
    double top = group_lasso_null_threshold(x, y_projected);
    if (top <= 0.0) top = 1.0;
    return log_grid(top, top * 1e-3, count);
}

/// lambda1(lambda2) = c0 sqrt(max_j M_jj) (sqrt(m/n) + sqrt(2 log p / n)),
/// M = X^T Q^2 X / n.
inline double lambda1_rule(const RidgeSmoother& s, Index m, double c0) {
    const double n = static_cast<double>(s.n());
    const double p = static_cast<double>(s.p());
    double mjj = s.m_diagonal().maxCoeff();
    return c0 * std::sqrt(std::max(mjj, 0.0)) *
           (std::sqrt(static_cast<double>(m) / n) + std::sqrt(2.0 * std::log(p) / n));
}

inline double lambda1_rule(const Matrix& x, Index m, double lambda2, double c0) {
    return lambda1_rule(build_smoother(x, lambda2), m, c0);
}

namespace detail {

struct FoldData {
    Matrix x_train, y_train, x_test, y_test;
};

inline std::vector<FoldData> fold_data(const Matrix& x, const Matrix& y, int folds, std::uint64_t seed) {
    auto splits = make_splits(assign_folds(x.rows(), folds, seed), folds);
    std::vector<FoldData> out;
    out.reserve(splits.size());
    for (const auto& s : splits) {
        out.push_back({take_rows(x, s.train), take_rows(y, s.train), take_rows(x, s.test), take_rows(y, s.test)});
    }
    return out;
}

inline void finish_stage(TuningStage& st, int folds) {
    st.mean_errors.assign(st.points.size(), 0.0);
    for (std::size_t i = 0; i < st.points.size(); ++i) {
        double sum = 0.0;
        for (double e : st.fold_errors[i]) sum += e;
        st.mean_errors[i] = sum / folds;
    }
    st.selected = select_min_largest_penalty(st);
}

/// CV of stage-1 fits over pairs (lambda1_of(lambda2, fold-smoother) ..., lambda2).
/// For each fold and lambda2 the lambda1 values are visited in decreasing
/// order with warm starts.
template <class Lambda1Source>
TuningStage cv_stage1_pairs(const Matrix& x, const Matrix& y, const std::vector<double>& grid2,
                            Lambda1Source&& lambda1_values, const CvOptions& cv, std::string name) {
    auto data = fold_data(x, y, cv.folds, cv.seed);
    const std::size_t n2 = grid2.size();
    // lambda1 list per lambda2 index (shared across folds).
    std::vector<std::vector<double>> l1_lists(n2);
    for (std::size_t b = 0; b < n2; ++b) l1_lists[b] = lambda1_values(b);

    std::vector<std::vector<std::vector<double>>> errs(
        n2, std::vector<std::vector<double>>(0));
    for (std::size_t b = 0; b < n2; ++b)
        errs[b].assign(l1_lists[b].size(), std::vector<double>(static_cast<std::size_t>(cv.folds), 0.0));

    const std::size_t jobs = n2 * static_cast<std::size_t>(cv.folds);
    parallel_for(jobs, cv.threads, [&](std::size_t job) {
        std::size_t b = job / static_cast<std::size_t>(cv.folds);
        std::size_t f = job % static_cast<std::size_t>(cv.folds);
        const FoldData& fd = data[f];
        RidgeSmoother s = build_smoother(fd.x_train, grid2[b], cv.stage1.rank_tol);
        const auto& l1s = l1_lists[b];
        std::vector<std::size_t> order(l1s.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return l1s[i] > l1s[j]; });
        std::optional<Matrix> warm;
        for (std::size_t i : order) {
            Stage1Fit fit = fit_stage1(s, fd.x_train, fd.y_train, l1s[i], cv.stage1, warm);
            errs[b][i][f] = heldout_mse(fd.x_test, fd.y_test, fit.f_hat);
            warm = fit.psi_hat;
        }
    });

    TuningStage st;
    st.name = std::move(name);
    st.params = {"lambda1", "lambda2"};
    for (std::size_t b = 0; b < n2; ++b) {
        for (std::size_t i = 0; i < l1_lists[b].size(); ++i) {
            st.points.push_back({l1_lists[b][i], grid2[b]});
            st.fold_errors.push_back(errs[b][i]);
        }
    }
    finish_stage(st, cv.folds);
    return st;
}

}  // namespace detail

struct Stage1Tuning {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    TuningRecord record;
};

/// k-fold CV over the two-way grid grid1 x grid2.
inline Stage1Tuning cv_tune_stage1(const Matrix& x, const Matrix& y, const std::vector<double>& grid1,
                                   const std::vector<double>& grid2, const CvOptions& cv = {}) {
    require(!grid1.empty() && !grid2.empty(), "cv_tune_stage1: grids must be nonempty");
    require(x.rows() == y.rows(), "cv_tune_stage1: X and Y row counts differ");
    for (double v : grid1) require(std::isfinite(v) && v >= 0.0, "cv_tune_stage1: lambda1 grid values must be >= 0");
    for (double v : grid2) require(std::isfinite(v) && v >= 0.0, "cv_tune_stage1: lambda2 grid values must be >= 0");
    TuningStage st = detail::cv_stage1_pairs(
        x, y, grid2, [&](std::size_t) { return grid1; }, cv, "stage1_grid");
    Stage1Tuning out;
    out.lambda1 = st.points[st.selected][0];
    out.lambda2 = st.points[st.selected][1];
    out.record.lambda1 = out.lambda1;
    out.record.lambda2 = out.lambda2;
    out.record.folds = cv.folds;
    out.record.seed = cv.seed;
    out.record.stages.push_back(std::move(st));
    return out;
}

/// Two stages: lambda2 by CV with lambda1 tied to lambda2 through
/// lambda1_rule, then lambda1 by CV at the selected lambda2. An empty grid1
/// is replaced by a log grid under the stage-1 null threshold at lambda2*.
inline Stage1Tuning sequential_tune(const Matrix& x, const Matrix& y, const std::vector<double>& grid2, double c0,
                                    std::vector<double> grid1, const CvOptions& cv = {}) {
    require(!grid2.empty(), "sequential_tune: lambda2 grid must be nonempty");
    require(c0 > 0.0, "sequential_tune: c0 must be positive");
    require(x.rows() == y.rows(), "sequential_tune: X and Y row counts differ");
    for (double v : grid2) require(std::isfinite(v) && v >= 0.0, "sequential_tune: lambda2 grid values must be >= 0");

    DesignFactorization fac = factorize_design(x, cv.stage1.rank_tol);
    std::vector<double> tied(grid2.size());
    for (std::size_t b = 0; b < grid2.size(); ++b) tied[b] = lambda1_rule(RidgeSmoother(fac, grid2[b]), y.cols(), c0);

    TuningStage a = detail::cv_stage1_pairs(
        x, y, grid2, [&](std::size_t b) { return std::vector<double>{tied[b]}; }, cv, "sequential_lambda2");
    const double lambda2 = a.points[a.selected][1];

    if (grid1.empty()) {
        double top = stage1_null_threshold(RidgeSmoother(fac, lambda2), x, y);
        if (top <= 0.0) top = 1.0;
        grid1 = log_grid(top, top * 1e-3, 10);
    }
    for (double v : grid1) require(std::isfinite(v) && v >= 0.0, "sequential_tune: lambda1 grid values must be >= 0");
    TuningStage b = detail::cv_stage1_pairs(
        x, y, std::vector<double>{lambda2}, [&](std::size_t) { return grid1; }, cv, "sequential_lambda1");

    Stage1Tuning out;
    out.lambda1 = b.points[b.selected][0];
    out.lambda2 = lambda2;
    out.record.lambda1 = out.lambda1;
    out.record.lambda2 = out.lambda2;
    out.record.folds = cv.folds;
    out.record.seed = cv.seed;
    out.record.stages.push_back(std::move(a));
    out.record.stages.push_back(std::move(b));
    return out;
}

struct PenaltyTuning {
    double lambda = 0.0;
    TuningRecord record;
};

/// CV of a plain group lasso of y on x over `grid` (warm-started path).
inline TuningStage cv_group_lasso_stage(const Matrix& x, const Matrix& y, const std::vector<double>& grid,
                                        const CvOptions& cv, const GroupLassoOptions& solver, std::string name,
                                        std::string param) {
    require(!grid.empty(), "group-lasso CV: grid must be nonempty");
    for (double v : grid) require(std::isfinite(v) && v >= 0.0, "group-lasso CV: grid values must be >= 0");
    auto data = detail::fold_data(x, y, cv.folds, cv.seed);
    std::vector<std::vector<double>> errs(grid.size(), std::vector<double>(static_cast<std::size_t>(cv.folds)));
    std::vector<std::size_t> order(grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return grid[i] > grid[j]; });
    parallel_for(static_cast<std::size_t>(cv.folds), cv.threads, [&](std::size_t f) {
        const auto& fd = data[f];
        std::optional<Matrix> warm;
        for (std::size_t i : order) {
            GroupLassoResult r = fit_group_lasso(fd.x_train, fd.y_train, grid[i], solver, warm);
            errs[i][f] = heldout_mse(fd.x_test, fd.y_test, r.coef);
            warm = std::move(r.coef);
        }
    });
    TuningStage st;
    st.name = std::move(name);
    st.params = {std::move(param)};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        st.points.push_back({grid[i]});
        st.fold_errors.push_back(errs[i]);
    }
    detail::finish_stage(st, cv.folds);
    return st;
}

/// CV of the projected-response group lasso. The projection is computed once
/// on the full data and held fixed across folds.
inline PenaltyTuning cv_tune_lambda3(const Matrix& x, const Matrix& y, const ProjectionEstimate& projection,
                                     std::vector<double> grid3, const CvOptions& cv = {}) {
    require(projection.u_hat.rows() == y.cols(), "cv_tune_lambda3: projection dimension does not match Y");
    Matrix yp = projection.annihilate(y);
    if (grid3.empty()) grid3 = default_lambda3_grid(x, yp);
    TuningStage st = cv_group_lasso_stage(x, yp, grid3, cv, cv.stage1.solver, "lambda3", "lambda3");
    PenaltyTuning out;
    out.lambda = st.points[st.selected][0];
    out.record.lambda3 = out.lambda;
    out.record.folds = cv.folds;
    out.record.seed = cv.seed;
    out.record.projection_fixed_across_folds = true;
    out.record.stages.push_back(std::move(st));
    return out;
}

/// CV of ridge-only fits (Psi = 0) over a lambda2 grid.
inline PenaltyTuning cv_tune_ridge(const Matrix& x, const Matrix& y, std::vector<double> grid2, const CvOptions& cv = {}) {
    if (grid2.empty()) grid2 = default_lambda2_grid(x);
    for (double v : grid2) require(std::isfinite(v) && v >= 0.0, "ridge CV: grid values must be >= 0");
    auto data = detail::fold_data(x, y, cv.folds, cv.seed);
    std::vector<std::vector<double>> errs(grid2.size(), std::vector<double>(static_cast<std::size_t>(cv.folds)));
    parallel_for(static_cast<std::size_t>(cv.folds), cv.threads, [&](std::size_t f) {
        const auto& fd = data[f];
        DesignFactorization fac = factorize_design(fd.x_train, cv.stage1.rank_tol);
        for (std::size_t i = 0; i < grid2.size(); ++i) {
            RidgeSmoother s(fac, grid2[i]);
            errs[i][f] = heldout_mse(fd.x_test, fd.y_test, s.backsolve(fd.y_train).coef);
        }
    });
    TuningStage st;
    st.name = "ridge_lambda2";
    st.params = {"lambda2"};
    for (std::size_t i = 0; i < grid2.size(); ++i) {
        st.points.push_back({grid2[i]});
        st.fold_errors.push_back(errs[i]);
    }
    detail::finish_stage(st, cv.folds);
    PenaltyTuning out;
    out.lambda = st.points[st.selected][0];
    out.record.lambda2 = out.lambda;
    out.record.folds = cv.folds;
    out.record.seed = cv.seed;
    out.record.stages.push_back(std::move(st));
    return out;
}

}  // namespace hive
