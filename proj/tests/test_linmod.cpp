#include <gtest/gtest.h>

#include <cmath>

#include "hybridtrial/linmod.hpp"
#include "hybridtrial/rng.hpp"
#include "oracles.hpp"

using namespace hybridtrial;

TEST(Expit, StableAtExtremes) {
    EXPECT_DOUBLE_EQ(expit(0.0), 0.5);
    EXPECT_EQ(expit(-800.0), 0.0);
    EXPECT_EQ(expit(800.0), 1.0);
    EXPECT_NEAR(expit(-30.0), std::exp(-30.0), 1e-25);
    EXPECT_NEAR(logit(expit(1.7)), 1.7, 1e-12);
}

TEST(Design, LayoutAndChecks) {
    DesignSpec s = DesignSpec::main_effects(2).with(Regressor::a).with(Regressor::z);
    s.squares = {1};
    EXPECT_EQ(s.n_columns(), 6u);
    Eigen::RowVectorXd row(6);
    Eigen::RowVector2d x(2.0, -3.0);
    s.fill_row(x, 1, 0, row);
    EXPECT_EQ(row, (Eigen::RowVectorXd(6) << 1.0, 2.0, -3.0, 9.0, 0.0, 1.0).finished());
    EXPECT_THROW(DesignSpec::main_effects(3).check(2), DimensionMismatch);
    DesignSpec dup = DesignSpec::main_effects(2);
    dup.covariates.push_back(0);
    EXPECT_THROW(dup.check(2), DimensionMismatch);
}

// 100 random designs: QR least squares agrees with normal equations solved
// by elimination.
TEST(Ols, MatchesEliminationOracle) {
    Rng rng(100);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 20 + static_cast<int>(rng.index(200));
        const int k = 1 + static_cast<int>(rng.index(6));
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 1.0;
            for (int j = 1; j < k; ++j) x(i, j) = rng.normal(0.0, 1.0 + j);
            y[i] = rng.normal(2.0, 3.0);
        }
        const auto fit = fit_ols(x, y);
        const auto ref = oracle::ols(x, y);
        for (int j = 0; j < k; ++j) ASSERT_NEAR(fit.coefficients[j], ref[j], 1e-9) << "rep " << rep;
    }
}

TEST(Ols, ExactRecoveryWithoutNoise) {
    Rng rng(2);
    Eigen::MatrixXd x(50, 3);
    for (int i = 0; i < 50; ++i) x.row(i) << 1.0, rng.normal(), rng.normal();
    const Eigen::Vector3d beta(0.5, -1.25, 2.0);
    const auto fit = fit_ols(x, x * beta);
    EXPECT_LT((fit.coefficients - beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(fit.residual_variance, 1e-20);
}

TEST(Ols, WeightedEqualsReplication) {
    Rng rng(3);
    Eigen::MatrixXd x(30, 2);
    Eigen::VectorXd y(30), w(30);
    for (int i = 0; i < 30; ++i) {
        x.row(i) << 1.0, rng.normal();
        y[i] = rng.normal();
        w[i] = 1.0 + static_cast<double>(rng.index(3));
    }
    const int total = static_cast<int>(w.sum());
    Eigen::MatrixXd xr(total, 2);
    Eigen::VectorXd yr(total);
    int r = 0;
    for (int i = 0; i < 30; ++i)
        for (int c = 0; c < static_cast<int>(w[i]); ++c, ++r) {
            xr.row(r) = x.row(i);
            yr[r] = y[i];
        }
    EXPECT_LT((fit_ols(x, y, w).coefficients - fit_ols(xr, yr).coefficients).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ols, RankDeficient) {
    Eigen::MatrixXd x(10, 3);
    for (int i = 0; i < 10; ++i) x.row(i) << 1.0, i, 2.0 * i;
    EXPECT_THROW(fit_ols(x, Eigen::VectorXd::Ones(10)), RankDeficient);
    EXPECT_THROW(fit_ols(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(2)), RankDeficient);
    EXPECT_THROW(fit_ols(Eigen::MatrixXd::Ones(3, 1), Eigen::VectorXd::Ones(2)), DimensionMismatch);
}

// 100 random one-covariate problems: IRLS against the grid-search maximum.
TEST(Logistic, MatchesGridOracle) {
    Rng rng(200);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 40 + static_cast<int>(rng.index(160));
        const double b0 = rng.normal(0.0, 0.7), b1 = rng.normal(0.0, 0.7);
        Eigen::MatrixXd x(n, 2);
        Eigen::VectorXd y(n);
        std::vector<double> xs(n);
        std::vector<int> ys(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = rng.normal();
            ys[i] = rng.bernoulli(expit(b0 + b1 * xs[i])) ? 1 : 0;
            x.row(i) << 1.0, xs[i];
            y[i] = ys[i];
        }
        FittedLogistic fit;
        try {
            fit = fit_logistic(x, y);
        } catch (const Separation&) {
            continue;  // tiny samples can separate; covered elsewhere
        }
        const auto [g0, g1] = oracle::logistic_grid(xs, ys);
        ASSERT_NEAR(fit.coefficients[0], g0, 1e-6) << "rep " << rep;
        ASSERT_NEAR(fit.coefficients[1], g1, 1e-6) << "rep " << rep;
        ASSERT_TRUE(fit.converged);
    }
}

TEST(Logistic, LoglikNonDecreasing) {
    Rng rng(5);
    Eigen::MatrixXd x(300, 3);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) {
        x.row(i) << 1.0, rng.normal(), rng.normal();
        y[i] = rng.bernoulli(expit(0.3 + 1.5 * x(i, 1) - x(i, 2))) ? 1.0 : 0.0;
    }
    const auto fit = fit_logistic(x, y);
    for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k)
        EXPECT_GE(fit.loglik_trace[k], fit.loglik_trace[k - 1] - 1e-9);
    const Eigen::VectorXd score = x.transpose() * (y - predict(fit, x));
    EXPECT_LT(score.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Logistic, InterceptOnlyIsLogitOfMean) {
    Eigen::VectorXd y(10);
    y << 1, 0, 0, 1, 1, 1, 0, 1, 1, 1;
    const auto fit = fit_logistic(Eigen::MatrixXd::Ones(10, 1), y);
    EXPECT_NEAR(fit.coefficients[0], std::log(0.7 / 0.3), 1e-9);
}

TEST(Logistic, SeparationDetected) {
    Eigen::MatrixXd x(20, 2);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x.row(i) << 1.0, i - 9.5;
        y[i] = i >= 10 ? 1.0 : 0.0;
    }
    EXPECT_THROW(fit_logistic(x, y), Separation);
    EXPECT_THROW(fit_logistic(Eigen::MatrixXd::Ones(5, 1), Eigen::VectorXd::Ones(5)), Separation);
}

TEST(Logistic, RejectsNonBinary) {
    Eigen::VectorXd y(3);
    y << 0, 1, 0.5;
    EXPECT_THROW(fit_logistic(Eigen::MatrixXd::Ones(3, 1), y), DimensionMismatch);
}

TEST(FittedMean, EvaluatesOnCovariates) {
    Rng rng(8);
    auto d = oracle::random_dataset(rng, 2);
    const auto rows = d.cell_rows(1, 1);
    const auto fm = fit_mean(d, rows, DesignSpec::main_effects(2), gather(d.y, rows), MeanLink::identity);
    const Eigen::VectorXd all = fm.evaluate(d.x);
    EXPECT_NEAR(all[3], fm(d.x.row(3)), 1e-14);
    EXPECT_THROW(fit_mean(d, rows, DesignSpec::main_effects(2).with(Regressor::z), gather(d.y, rows),
                          MeanLink::identity),
                 DimensionMismatch);
}
