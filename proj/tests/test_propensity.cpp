#include <gtest/gtest.h>

#include "hybridtrial/propensity.hpp"
#include "oracles.hpp"

using namespace hybridtrial;

TEST(Propensity, FittedScoresMatchDirectLogistic) {
    Rng rng(21);
    const auto d = oracle::random_dataset(rng, 2);
    const auto design = DesignSpec::main_effects(2);
    const auto fp = estimate_propensities(d, design, design);
    const auto direct = fit_logistic(design.build(d), d.z.cast<double>());
    EXPECT_LT((fp.e_z - predict(direct, design.build(d))).cwiseAbs().maxCoeff(), 1e-14);
    ASSERT_TRUE(fp.a_model.has_value());
    // e_a is fitted on trial rows only but evaluated everywhere
    EXPECT_EQ(fp.e_a.size(), static_cast<Eigen::Index>(d.size()));
    const Eigen::VectorXd score = design.build(d).transpose() * (d.z.cast<double>() - fp.e_z);
    EXPECT_LT(score.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Propensity, KnownConstantTreatment) {
    Rng rng(22);
    const auto d = oracle::random_dataset(rng, 1);
    const auto fp = estimate_propensities(d, DesignSpec::main_effects(1), KnownConstant{0.25});
    EXPECT_TRUE((fp.e_a.array() == 0.25).all());
    EXPECT_FALSE(fp.a_model.has_value());
    EXPECT_THROW(estimate_propensities(d, DesignSpec::main_effects(1), KnownConstant{1.0}), OverlapViolation);
}

TEST(Propensity, TrialOnlyGivesUnitMembership) {
    Rng rng(23);
    auto full = oracle::random_dataset(rng, 2);
    std::vector<std::size_t> rows = full.cell_rows(1, 1);
    for (auto r : full.cell_rows(1, 0)) rows.push_back(r);
    const auto trial = full.subset(rows);
    const auto fp = estimate_propensities(trial, DesignSpec::main_effects(2), DesignSpec::main_effects(2));
    EXPECT_TRUE((fp.e_z.array() == 1.0).all());
    EXPECT_FALSE(fp.z_model.has_value());
}

TEST(Propensity, EmptyTrialArm) {
    Rng rng(24);
    const auto full = oracle::random_dataset(rng, 1);
    std::vector<std::size_t> rows = full.cell_rows(1, 1);
    for (auto r : full.cell_rows(0, 0)) rows.push_back(r);
    EXPECT_THROW(estimate_propensities(full.subset(rows), DesignSpec::main_effects(1), DesignSpec::main_effects(1)),
                 EmptyCell);
}

TEST(Propensity, OverlapViolationAndClamp) {
    // membership strongly predicted by x: fitted scores fall near the bounds
    Rng rng(25);
    TrialDataset d;
    const int n = 200;
    d.z.resize(n);
    d.a.resize(n);
    d.x.resize(n, 1);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        d.z[i] = i < 100 ? 1 : 0;
        d.a[i] = i < 50 ? 1 : 0;
        d.x(i, 0) = rng.normal(d.z[i] == 1 ? 2.0 : -2.0, 1.0);
        d.y[i] = rng.normal();
    }
    const auto design = DesignSpec::main_effects(1);
    PropensityOptions opt;
    opt.epsilon = 0.05;
    EXPECT_THROW(estimate_propensities(d, design, KnownConstant{0.5}, opt), OverlapViolation);
    opt.clamp = true;
    const auto fp = estimate_propensities(d, design, KnownConstant{0.5}, opt);
    EXPECT_GT(fp.clamped, 0u);
    EXPECT_GE(fp.e_z.minCoeff(), 0.05);
    EXPECT_LE(fp.e_z.maxCoeff(), 0.95);
}

TEST(Propensity, OverlapReportSummaries) {
    FittedPropensities fp;
    fp.e_z = Eigen::VectorXd::LinSpaced(101, 0.0, 1.0);
    fp.e_a = Eigen::VectorXd::Ones(101);
    const auto r = overlap_report(fp);
    EXPECT_DOUBLE_EQ(r.e_z.median, 0.5);
    EXPECT_NEAR(r.e_z.q05, 0.05, 1e-12);
    EXPECT_DOUBLE_EQ(r.e_z.max, 1.0);
    EXPECT_EQ(r.flagged, (std::vector<std::size_t>{100}));
}
