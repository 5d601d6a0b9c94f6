#include "hive/ridge_smoother.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace hive;

namespace {

// 6x3 design with X^T X = n I.
Matrix scaled_orthonormal_design() {
    Matrix q = oracle::random_orthonormal(6, 3, 11);
    return std::sqrt(6.0) * q;
}

}  // namespace

TEST(RidgeSmoother, FactorizationIsOrthonormalAndSorted) {
    Matrix x = oracle::random_matrix(8, 4, 1);
    DesignFactorization f = factorize_design(x);
    EXPECT_EQ(f.rank(), 4);
    EXPECT_LE((f.left_basis.transpose() * f.left_basis - Matrix::Identity(4, 4)).norm(), 1e-10);
    EXPECT_LE((f.right_basis.transpose() * f.right_basis - Matrix::Identity(4, 4)).norm(), 1e-10);
    for (Index k = 1; k < f.rank(); ++k) EXPECT_GE(f.singular_values(k - 1), f.singular_values(k));
    EXPECT_GT(f.singular_values.minCoeff(), 0.0);
}

TEST(RidgeSmoother, RankDeficientDesignIsTruncated) {
    Matrix x = oracle::random_matrix(10, 3, 2);
    Matrix wide(10, 5);
    wide << x, x.col(0) + x.col(1), 2.0 * x.col(2);
    DesignFactorization f = factorize_design(wide);
    EXPECT_EQ(f.rank(), 3);
}

TEST(RidgeSmoother, OrthonormalDesignAtZeroIsExactProjector) {
    Matrix x = scaled_orthonormal_design();
    RidgeSmoother s = build_smoother(x, 0.0);
    EXPECT_NEAR(s.trace_p(), 3.0, 1e-12);
    EXPECT_LE(s.apply(SmootherMode::QHalf, x).norm(), 1e-12);
}

TEST(RidgeSmoother, HugeLambdaKillsP) {
    Matrix x = oracle::random_matrix(8, 4, 3);
    Matrix m = oracle::random_matrix(8, 3, 4);
    m /= m.norm();
    RidgeSmoother s = build_smoother(x, 1e15);
    EXPECT_LE(s.apply(SmootherMode::P, m).norm(), 1e-9);
}

TEST(RidgeSmoother, TraceMatchesDenseInverseOracle) {
    Matrix x = oracle::random_matrix(8, 4, 5);
    RidgeSmoother s = build_smoother(x, 0.7);
    Matrix hat = oracle::dense_hat(x, 0.7);
    EXPECT_NEAR(s.trace_p(), hat.trace(), 1e-10);
    Vector sig = s.factorization().gram_eigenvalues();
    EXPECT_NEAR(s.trace_p(), (sig.array() / (sig.array() + 0.7)).sum(), 1e-12);
}

TEST(RidgeSmoother, EigenvaluesSumToOne) {
    Matrix x = oracle::random_matrix(12, 5, 6);
    RidgeSmoother s = build_smoother(x, 0.2);
    EXPECT_LE((s.p_eigs() + s.q_eigs() - Vector::Ones(5)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(s.p_eigs().minCoeff(), 0.0);
    EXPECT_LE(s.p_eigs().maxCoeff(), 1.0);
}

TEST(RidgeSmoother, ApplyModesAreConsistent) {
    Matrix x = oracle::random_matrix(8, 4, 7);
    Matrix y = oracle::random_matrix(8, 3, 8);
    RidgeSmoother s = build_smoother(x, 0.7);
    Matrix p = s.apply(SmootherMode::P, y);
    Matrix q = s.apply(SmootherMode::Q, y);
    EXPECT_LE((p + q - y).norm(), 1e-12);
    Matrix qq = s.apply(SmootherMode::QHalf, s.apply(SmootherMode::QHalf, y));
    EXPECT_LE((qq - q).norm(), 1e-10);
    EXPECT_LE((p - oracle::dense_hat(x, 0.7) * y).norm(), 1e-10);
}

TEST(RidgeSmoother, ApplyIsLinear) {
    Matrix x = oracle::random_matrix(9, 4, 9);
    Matrix a = oracle::random_matrix(9, 2, 10);
    Matrix b = oracle::random_matrix(9, 2, 11);
    RidgeSmoother s = build_smoother(x, 0.3);
    for (auto mode : {SmootherMode::P, SmootherMode::Q, SmootherMode::QHalf}) {
        Matrix lhs = s.apply(mode, 2.0 * a - 3.0 * b);
        Matrix rhs = 2.0 * s.apply(mode, a) - 3.0 * s.apply(mode, b);
        EXPECT_LE((lhs - rhs).norm(), 1e-12);
    }
}

TEST(RidgeSmoother, RowMismatchThrows) {
    RidgeSmoother s = build_smoother(oracle::random_matrix(8, 4, 12), 0.1);
    EXPECT_THROW(s.apply(SmootherMode::P, Matrix::Zero(7, 2)), InvalidArgument);
}

TEST(RidgeSmoother, InvalidInputsThrow) {
    Matrix x = oracle::random_matrix(5, 2, 13);
    EXPECT_THROW(build_smoother(x, -1.0), InvalidArgument);
    x(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(build_smoother(x, 0.1), DataError);
}

TEST(RidgeSmoother, IdempotentAtZero) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Matrix x = oracle::random_matrix(10, 4, 100 + seed);
        RidgeSmoother s = build_smoother(x, 0.0);
        Matrix m = oracle::random_matrix(10, 3, 200 + seed);
        Matrix pm = s.apply(SmootherMode::P, m);
        EXPECT_LE((s.apply(SmootherMode::P, pm) - pm).norm(), 1e-10);
    }
}

TEST(RidgeSmoother, QSpectrumAndOperatorNorm) {
    Matrix x = oracle::random_matrix(10, 4, 14);
    RidgeSmoother s = build_smoother(x, 0.5);
    // Q as a dense matrix, assembled only for the test.
    Matrix q = s.apply(SmootherMode::Q, Matrix::Identity(10, 10));
    Eigen::SelfAdjointEigenSolver<Matrix> es(q);
    Vector ev = es.eigenvalues();
    EXPECT_LE(ev.maxCoeff(), 1.0 + 1e-12);
    int ones = 0;
    for (Index i = 0; i < ev.size(); ++i) ones += std::abs(ev(i) - 1.0) < 1e-10;
    EXPECT_EQ(ones, 6);
    Vector expected = s.q_eigs();
    std::sort(expected.data(), expected.data() + expected.size());
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(ev(i), expected(i), 1e-10);
}

TEST(RidgeSmoother, MDiagonalMatchesDenseAndBound) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix x = oracle::random_matrix(15, 6, 300 + seed);
        double lambda2 = 0.05 + 0.3 * static_cast<double>(seed);
        RidgeSmoother s = build_smoother(x, lambda2);
        Matrix qx = s.apply(SmootherMode::Q, x);
        Vector dense = (qx.transpose() * qx).diagonal() / 15.0;
        EXPECT_LE((s.m_diagonal() - dense).cwiseAbs().maxCoeff(), 1e-10);
        Vector sig = s.factorization().gram_eigenvalues();
        double sigma_q = sig.minCoeff();
        double bound = (x.transpose() * x / 15.0).diagonal().maxCoeff() *
                       std::pow(lambda2 / (sigma_q + lambda2), 2);
        EXPECT_LE(s.m_diagonal().maxCoeff(), bound + 1e-12);
    }
}

TEST(RidgeBacksolve, OrthogonalResidualGivesZero) {
    Matrix x = oracle::random_matrix(8, 3, 15);
    RidgeSmoother s = build_smoother(x, 0.4);
    Matrix r = s.apply(SmootherMode::Q, oracle::random_matrix(8, 2, 16));
    RidgeSmoother s0 = build_smoother(x, 0.0);
    Matrix r_perp = s0.apply(SmootherMode::Q, r);
    EXPECT_LE(s.backsolve(r_perp).coef.norm(), 1e-12);
}

TEST(RidgeBacksolve, SquareFullRankIsExactSolve) {
    Matrix x = oracle::random_matrix(5, 5, 17);
    Matrix r = oracle::random_matrix(5, 2, 18);
    RidgeSolve sol = build_smoother(x, 0.0).backsolve(r);
    EXPECT_LE((x * sol.coef - r).norm(), 1e-9);
    EXPECT_FALSE(sol.pseudo_inverse);
}

TEST(RidgeBacksolve, MatchesDenseInverseOracle) {
    Matrix x = oracle::random_matrix(8, 4, 19);
    Matrix r = oracle::random_matrix(8, 3, 20);
    RidgeSolve sol = build_smoother(x, 0.3).backsolve(r);
    EXPECT_LE((sol.coef - oracle::dense_ridge(x, r, 0.3)).norm(), 1e-10);
}

TEST(RidgeBacksolve, RankDeficientAtZeroUsesPseudoInverse) {
    Matrix base = oracle::random_matrix(8, 2, 21);
    Matrix x(8, 3);
    x << base, base.col(0) - base.col(1);
    Matrix r = oracle::random_matrix(8, 2, 22);
    RidgeSolve sol = build_smoother(x, 0.0).backsolve(r);
    EXPECT_TRUE(sol.pseudo_inverse);
    Matrix pinv = x.completeOrthogonalDecomposition().pseudoInverse();
    EXPECT_LE((sol.coef - pinv * r).norm(), 1e-10);
}
