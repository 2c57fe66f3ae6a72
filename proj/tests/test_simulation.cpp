#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hybridtrial/simulation.hpp"

using namespace hybridtrial;

TEST(MembershipIntercept, SymmetricCases) {
    EXPECT_EQ(solve_alpha_z(kMembershipBeta, 0.5, 20000), 0.0);
    const std::array<double, 4> zero{};
    EXPECT_NEAR(solve_alpha_z(zero, 0.3, 1000), std::log(0.3 / 0.7), 1e-3);
    EXPECT_THROW(solve_alpha_z(zero, 1.0, 1000), BracketFailure);
}

TEST(MembershipIntercept, IndependentSampleHitsTarget) {
    const double alpha = solve_alpha_z(kMembershipBeta, 0.4, 200000);
    Rng rng(987654321);
    std::array<double, 4> x{};
    double s = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        draw_covariates(rng, x);
        double lp = alpha;
        for (std::size_t j = 0; j < 4; ++j) lp += kMembershipBeta[j] * x[j];
        s += expit(lp);
    }
    EXPECT_NEAR(s / n, 0.4, 2e-3);
}

TEST(Generate, ObservedOutcomesAndAllocation) {
    auto c = SimulationConfig::make(Scenario::S2, 0.4, 4, 1, 17);
    c.n = 20000;
    const auto t = generate(c, 0);
    const auto& d = t.dataset;
    double nz = 0, na = 0;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        const double expect = d.z[i] == 0 ? t.y00[i] : (d.a[i] == 1 ? t.y11[i] : t.y10[i]);
        EXPECT_EQ(d.y[i], expect);
        nz += d.z[i];
        na += d.a[i];
        EXPECT_NEAR(t.y10[i] - t.y00[i], t.b_true(d.x.row(i)), 1e-12);
    }
    EXPECT_NEAR(nz / d.y.size(), 0.5, 0.015);
    EXPECT_NEAR(na / nz, 0.8, 0.015);
}

TEST(Generate, DeterministicPerReplicate) {
    const auto c = SimulationConfig::make(Scenario::S3, 0.2, 2, 1, 5);
    const auto a = generate(c, 7);
    const auto b = generate(c, 7);
    const auto other = generate(c, 8);
    EXPECT_EQ(a.dataset.y, b.dataset.y);
    EXPECT_EQ(a.dataset.x, b.dataset.x);
    EXPECT_NE(a.dataset.y, other.dataset.y);
}

TEST(OutcomeLaw, BiasFunctions) {
    Eigen::RowVectorXd x(4);
    x << 1.0, 0.5, -2.0, 0.3;
    const double b = 0.4;
    const auto s1 = outcome_law(Scenario::S1, b);
    EXPECT_NEAR(s1.mu10(x) - s1.mu00(x), b, 1e-14);
    EXPECT_NEAR(s1.mu11(x) - s1.mu10(x), 0.4, 1e-14);

    const auto s2 = outcome_law(Scenario::S2, b);
    const double linear = b + b * 1.0 - 2.0 * b * 0.5 + b * -2.0 + 1.5 * b * 0.3;
    EXPECT_NEAR(s2.mu10(x) - s2.mu00(x), linear, 1e-14);

    const auto s3 = outcome_law(Scenario::S3, b);
    EXPECT_NEAR(s3.mu10(x) - s3.mu00(x), linear - b * (0.25 - 1.0), 1e-14);

    const auto s4c = outcome_law(Scenario::S4_constB, b);
    EXPECT_NEAR(s4c.mu10(x) - s4c.mu00(x), b, 1e-14);
}

TEST(Truth, SampleTruthOfConstantEffect) {
    const auto c = SimulationConfig::make(Scenario::S1, 0.4, 1, 1, 3);
    const auto t = generate(c, 0);
    for (auto e : {EstimandSpec::att(), EstimandSpec::ate(), EstimandSpec::atc(), EstimandSpec::ato()})
        EXPECT_NEAR(sample_truth(t, e), 0.4, 1e-12);
    EXPECT_NEAR(population_truth(Scenario::S1, 0.4, EstimandName::ATT), 0.4, 1e-12);
}

TEST(Study, ByteIdenticalAcrossThreads) {
    auto c = SimulationConfig::make(Scenario::S2, 0.2, 2, 12, 99);
    c.n = 400;
    std::ostringstream one, three;
    write_csv(run_study(c), one);
    c.threads = 3;
    write_csv(run_study(c), three);
    EXPECT_EQ(one.str(), three.str());
}

TEST(Study, UnbiasedWithoutExternalBias) {
    const auto c = SimulationConfig::make(Scenario::S1, 0.0, 1, 100, 21);
    const auto t = run_study(c);
    EXPECT_EQ(t.failed_reps, 0u);
    for (const auto& r : t.rows)
        EXPECT_LT(std::abs(r.bias_raw), 3.0 * r.sd_raw / std::sqrt(static_cast<double>(r.reps))) << r.estimator;
}

TEST(Study, TrialImbalanceInflatesDifferenceOfMeans) {
    const auto balanced = run_study(SimulationConfig::make(Scenario::S1, 0.0, 1, 100, 22));
    const auto skewed = run_study(SimulationConfig::make(Scenario::S1, 0.0, 10, 100, 22));
    EXPECT_GT(skewed.find(0.0, 10, "MD", EstimandName::ATT)->sd_raw,
              balanced.find(0.0, 1, "MD", EstimandName::ATT)->sd_raw);
}

TEST(Study, ConfigChecks) {
    auto c = SimulationConfig::make(Scenario::S1, 0.0, 0, 10, 1);
    EXPECT_THROW(run_study(c), DimensionMismatch);
    c.m = 1;
    c.sigma = 0.0;
    EXPECT_THROW(run_study(c), DimensionMismatch);
    EXPECT_EQ(parse_scenario("2ln"), Scenario::S2_lowNoise);
    EXPECT_FALSE(parse_scenario("7").has_value());
}

TEST(Study, MultiEstimandLabels) {
    auto c = SimulationConfig::make(Scenario::S4, 0.2, 1, 3, 2);
    c.n = 300;
    const auto t = run_study(c);
    ASSERT_NE(t.find(0.2, 1, "aug-const", EstimandName::ATO), nullptr);
    EXPECT_EQ(t.find(0.2, 1, "aug-const", EstimandName::ATO)->label(), "ATO-const");
    EXPECT_EQ(t.find(0.2, 1, "MD", EstimandName::ATT), nullptr);
}
