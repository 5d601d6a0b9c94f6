#include "hive/sim_bench.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace hive;
using namespace hive::sim;

namespace {

double mean_rsse(const std::vector<MetricsRecord>& t, const std::string& method) {
    double s = 0.0;
    int c = 0;
    for (const auto& r : t)
        if (r.method == method) {
            s += r.rsse;
            ++c;
        }
    return s / c;
}

}  // namespace

TEST(Generator, DegenerateConfigIsPureFactorPlusNoise) {
    SimConfig c;
    c.eta = 0.0;
    c.s_star = 0;
    c.alpha = 3.0;
    CounterRng drng(1);
    DesignDraw d = draw_design(c, drng);
    EXPECT_EQ(d.truth.theta.norm(), 0.0);
    EXPECT_EQ(d.truth.f_mat.norm(), 0.0);
    CounterRng rng(2);
    Matrix y = draw_response(c, d, rng);
    CounterRng replay(2);
    Matrix w = normal_matrix(c.n, c.k, replay);
    Matrix e = normal_matrix(c.n, c.m, replay) * d.truth.tau2.cwiseSqrt().asDiagonal();
    EXPECT_LE((y - (w * d.truth.b_mat + e)).norm(), 1e-12);
}

TEST(Generator, HomoscedasticVariancesAreOne) {
    SimConfig c;
    auto [data, truth] = generate_dataset(c, 3);
    EXPECT_TRUE(truth.tau2 == Vector::Ones(c.m));
}

TEST(Generator, HeteroscedasticVariancesAverageOne) {
    for (double alpha : {0.5, 4.0, 12.0}) {
        SimConfig c;
        c.alpha = alpha;
        auto [data, truth] = generate_dataset(c, 4);
        EXPECT_NEAR(truth.tau2.sum() / static_cast<double>(c.m), 1.0, 1e-12);
        EXPECT_GT(truth.tau2.minCoeff(), 0.0);
    }
}

TEST(Generator, DesignCovarianceMoments) {
    SimConfig c;
    c.n = 20000;
    c.p = 5;
    c.rho = 0.5;
    auto [data, truth] = generate_dataset(c, 5);
    Matrix s = data.x.transpose() * data.x / static_cast<double>(c.n);
    EXPECT_LE((s - design_covariance(5, 0.5)).cwiseAbs().maxCoeff(), 0.03);
    EXPECT_DOUBLE_EQ(truth.sigma_x(0, 1), -0.5);
    EXPECT_DOUBLE_EQ(truth.sigma_x(0, 2), 0.25);
}

TEST(Generator, TruthInvariants) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SimConfig c;
        c.seed = seed;
        auto [data, truth] = generate_dataset(c, seed);
        EXPECT_LE((truth.theta * row_space_projector(truth.b_mat)).norm(), 1e-8);
        EXPECT_EQ(truth.theta.bottomRows(c.p - c.s_star).norm(), 0.0);
        EXPECT_LE((truth.f_mat - truth.theta - truth.a_mat * truth.b_mat).norm(), 1e-12);
    }
}

TEST(Generator, LoadingMomentsUseVarianceReading) {
    SimConfig c;
    c.p = 1500;
    c.m = 1500;
    c.n = 2;
    c.k = 1;
    c.eta = 2.0;
    CounterRng rng(6);
    DesignDraw d = draw_design(c, rng);
    Eigen::ArrayXd a = d.truth.a_mat.col(0).array();
    double am = a.mean();
    double asd = std::sqrt((a - am).square().mean());
    // Standard deviation 2 * sqrt(0.1) = 0.63; the SD reading would give 0.2.
    EXPECT_NEAR(am, 2.0 * 0.5, 0.05);
    EXPECT_NEAR(asd, 2.0 * std::sqrt(0.1), 0.05);
    Eigen::ArrayXd b = d.truth.b_mat.row(0).transpose().array();
    double bm = b.mean();
    EXPECT_NEAR(bm, 0.1, 0.08);
    EXPECT_NEAR(std::sqrt((b - bm).square().mean()), 1.0, 0.06);
}

TEST(Generator, InvalidConfig) {
    SimConfig c;
    c.k = c.m;
    EXPECT_THROW(generate_dataset(c, 1), InvalidArgument);
    c = SimConfig{};
    c.rho = 1.0;
    EXPECT_THROW(generate_dataset(c, 1), InvalidArgument);
}

TEST(Ols, IdentityDesignAndNoiselessRecovery) {
    Matrix x = Matrix::Identity(4, 4);
    Matrix x5(5, 4);
    x5 << x, Matrix::Zero(1, 4);
    Matrix y = oracle::random_matrix(5, 3, 7);
    EXPECT_LE((baseline_ols(x5, y) - y.topRows(4)).norm(), 1e-12);
    Matrix xr = oracle::random_matrix(30, 6, 8);
    Matrix theta = oracle::random_matrix(6, 4, 9);
    EXPECT_LE((baseline_ols(xr, xr * theta) - theta).norm(), 1e-9);
}

TEST(Ols, MatchesDenseSolve) {
    Matrix x = oracle::random_matrix(40, 7, 10);
    Matrix y = oracle::random_matrix(40, 3, 11);
    Matrix dense = (x.transpose() * x).inverse() * x.transpose() * y;
    EXPECT_LE((baseline_ols(x, y) - dense).norm(), 1e-10);
}

TEST(Ols, Errors) {
    EXPECT_THROW(baseline_ols(oracle::random_matrix(5, 5, 12), oracle::random_matrix(5, 2, 13)), InvalidArgument);
    Matrix x = oracle::random_matrix(10, 3, 14);
    x.col(2) = x.col(0);
    EXPECT_THROW(baseline_ols(x, oracle::random_matrix(10, 2, 15)), DataError);
}

TEST(Sva, DirectionOrthogonalToSignalIsOls) {
    Matrix x = oracle::random_matrix(30, 4, 16);
    Vector v = Vector::Zero(5);
    v(4) = 1.0;
    Matrix theta = oracle::random_matrix(4, 5, 17);
    theta.col(4).setZero();
    // Residual component orthogonal to col(X), loading only on v.
    Matrix e = oracle::random_matrix(30, 1, 18);
    e -= x * x.colPivHouseholderQr().solve(e);
    Matrix y = x * theta + e * v.transpose();
    ThetaEstimate th = baseline_sva(x, y, 1);
    EXPECT_LE((th.theta - baseline_ols(x, y)).norm(), 1e-10);
    EXPECT_EQ(th.support.size(), 4u);
}

TEST(Sva, MatchesStepwiseRecomputation) {
    auto [data, truth] = generate_dataset(SimConfig{}, 19);
    ThetaEstimate th = baseline_sva(data.x, data.y, 3);
    Matrix ls = (data.x.transpose() * data.x).ldlt().solve(data.x.transpose() * data.y);
    Matrix r = data.y - data.x * ls;
    Matrix p = oracle::dense_top_projector(r.transpose() * r, 3);
    Matrix expected = ls * (Matrix::Identity(20, 20) - p);
    EXPECT_LE((th.theta - expected).norm(), 1e-8);
}

TEST(OracleBaseline, OrthonormalRowsAndNullThreshold) {
    Matrix b = oracle::random_orthonormal(8, 2, 20).transpose();
    EXPECT_LE((row_space_projector(b) - b.transpose() * b).norm(), 1e-12);
    Matrix x = oracle::random_matrix(25, 5, 21);
    Matrix y = oracle::random_matrix(25, 8, 22);
    Matrix yp = oracle_projection(b).annihilate(y);
    ThetaEstimate th = baseline_oracle(x, y, b, group_lasso_null_threshold(x, yp));
    EXPECT_EQ(th.theta.norm(), 0.0);
}

TEST(Rrr, FullRankEqualsMinNormOls) {
    Matrix x = oracle::random_matrix(30, 5, 23);
    Matrix y = oracle::random_matrix(30, 7, 24);
    RrrFit r = baseline_rrr(x, y, 5);
    EXPECT_LE((r.l_hat - baseline_ols(x, y)).norm(), 1e-9);
    Matrix wide = oracle::random_matrix(6, 10, 25);
    Matrix yw = oracle::random_matrix(6, 8, 26);
    RrrFit rw = baseline_rrr(wide, yw, 6);
    Matrix pinv = wide.completeOrthogonalDecomposition().pseudoInverse();
    EXPECT_LE((rw.l_hat - pinv * yw).norm(), 1e-9);
}

TEST(Rrr, MatchesTruncatedSvdOracle) {
    Matrix x = oracle::random_matrix(30, 6, 27);
    Matrix y = oracle::random_matrix(30, 5, 28);
    RrrFit r = baseline_rrr(x, y, 2);
    Matrix hat = x * (x.transpose() * x).inverse() * x.transpose();
    Eigen::JacobiSVD<Matrix> svd(hat * y, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix trunc = svd.matrixU().leftCols(2) * svd.singularValues().head(2).asDiagonal() *
                   svd.matrixV().leftCols(2).transpose();
    EXPECT_LE((r.fitted - trunc).norm(), 1e-9);
    EXPECT_LE((x * r.l_hat - r.fitted).norm(), 1e-9);
    Eigen::JacobiSVD<Matrix> ls(r.l_hat);
    EXPECT_LE(ls.singularValues()(2), 1e-9 * ls.singularValues()(0));
}

TEST(Rrr, RankOutOfRange) {
    Matrix x = oracle::random_matrix(20, 4, 29);
    Matrix y = oracle::random_matrix(20, 3, 30);
    EXPECT_THROW(baseline_rrr(x, y, 0), InvalidArgument);
    EXPECT_THROW(baseline_rrr(x, y, 4), InvalidArgument);
}

TEST(Metrics, ExactTruthAndHandInstance) {
    GroundTruth t;
    t.theta = Matrix::Zero(2, 2);
    t.f_mat = Matrix::Zero(2, 2);
    Matrix x = Matrix::Identity(2, 2);
    MetricsRecord zero = compute_metrics(t.theta, t.f_mat, t, x);
    EXPECT_EQ(zero.rsse, 0.0);
    EXPECT_EQ(*zero.pmse, 0.0);
    Matrix th(2, 2);
    th << 1, 0, 0, 1;
    Matrix f(2, 2);
    f << 1, 1, 0, 0;
    MetricsRecord r = compute_metrics(th, f, t, x);
    EXPECT_DOUBLE_EQ(r.rsse, std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(*r.pmse, 0.5);
    EXPECT_FALSE(compute_metrics(th, std::nullopt, t, x).pmse.has_value());
}

TEST(Experiment, SingleRowAndUnknownMethod) {
    SimConfig c;
    auto t = run_experiment({c}, {"oracle"}, 1, 1);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].method, "oracle");
    EXPECT_FALSE(t[0].pmse.has_value());
    EXPECT_THROW(run_experiment({c}, {"oracle", "bogus"}, 1, 1), InvalidArgument);
}

TEST(Experiment, DeterministicAndIndexSeeded) {
    SimConfig a;
    SimConfig b;
    b.alpha = 4.0;
    b.seed = 9;
    std::vector<std::string> methods = {"ols", "ridge", "sva", "rrr", "lasso"};
    ExperimentOptions eo;
    eo.folds = 5;
    auto t1 = run_experiment({a, b}, methods, 3, 42, eo);
    eo.threads = 3;
    auto t2 = run_experiment({a, b}, methods, 3, 42, eo);
    ASSERT_EQ(t1.size(), 2u * 3u * methods.size());
    ASSERT_EQ(t1.size(), t2.size());
    for (std::size_t i = 0; i < t1.size(); ++i) {
        EXPECT_EQ(t1[i].rsse, t2[i].rsse);
        EXPECT_EQ(t1[i].pmse, t2[i].pmse);
        EXPECT_EQ(t1[i].seed, t2[i].seed);
    }
    // Fewer replicates reproduce the shared prefix exactly.
    eo.threads = 1;
    auto t3 = run_experiment({a, b}, methods, 2, 42, eo);
    for (const auto& r : t3) {
        auto it = std::find_if(t1.begin(), t1.end(), [&](const MetricsRecord& o) {
            return o.config_id == r.config_id && o.replicate == r.replicate && o.method == r.method;
        });
        ASSERT_NE(it, t1.end());
        EXPECT_EQ(it->rsse, r.rsse);
    }
}

TEST(Experiment, Summaries) {
    std::vector<MetricsRecord> t(3);
    for (int i = 0; i < 3; ++i) {
        t[static_cast<std::size_t>(i)].method = "x";
        t[static_cast<std::size_t>(i)].rsse = 1.0 + i;
    }
    t[0].pmse = 2.0;
    auto s = summarize(t);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].count, 3);
    EXPECT_DOUBLE_EQ(s[0].rsse_mean, 2.0);
    EXPECT_DOUBLE_EQ(s[0].rsse_sd, 1.0);
    EXPECT_DOUBLE_EQ(*s[0].pmse_mean, 2.0);
}

// 50 replicates of the homoscedastic base design.
TEST(Experiment, BaseConfigOrderings) {
    SimConfig c;
    auto t = run_experiment({c}, {"oracle", "hive", "hhive", "hive_init", "lasso", "ridge"}, 50, 2024);
    double oracle = mean_rsse(t, "oracle"), hive = mean_rsse(t, "hive"), hhive = mean_rsse(t, "hhive");
    EXPECT_LE(oracle, hive);
    EXPECT_LT(hive, mean_rsse(t, "lasso"));
    EXPECT_LT(hive, mean_rsse(t, "ridge"));
    EXPECT_LT(hive, mean_rsse(t, "hive_init"));
    EXPECT_LE(std::abs(hhive - hive), 0.10 * hive);
}
