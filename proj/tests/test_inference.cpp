#include <gtest/gtest.h>

#include <atomic>

#include "hybridtrial/inference.hpp"
#include "hybridtrial/outcome_models.hpp"
#include "hybridtrial/propensity.hpp"
#include "oracles.hpp"

using namespace hybridtrial;

namespace {

double aug_const_att(const TrialDataset& d) {
    const auto design = DesignSpec::main_effects(d.n_covariates());
    const auto fp = estimate_propensities(d, design, design);
    const auto models = fit_outcome_models(d, BiasSpec::constant(), design);
    return estimate_wate(d, fp, models, EstimandSpec::att()).point;
}

} // namespace

TEST(Bootstrap, ResamplePreservesCellSizes) {
    Rng rng(51);
    const auto d = oracle::random_dataset(rng, 1);
    for (std::uint64_t r = 0; r < 10; ++r) {
        const auto b = d.subset(stratified_resample(d, 9, r));
        EXPECT_EQ(b.cell_rows(1, 1).size(), d.cell_rows(1, 1).size());
        EXPECT_EQ(b.cell_rows(1, 0).size(), d.cell_rows(1, 0).size());
        EXPECT_EQ(b.cell_rows(0, 0).size(), d.cell_rows(0, 0).size());
    }
    EXPECT_EQ(stratified_resample(d, 9, 4), stratified_resample(d, 9, 4));
    EXPECT_NE(stratified_resample(d, 9, 4), stratified_resample(d, 9, 5));
}

TEST(Bootstrap, IndependentOfThreadCount) {
    Rng rng(52);
    const auto d = oracle::random_dataset(rng, 2, 40);
    BootstrapOptions opt;
    opt.replicates = 120;
    opt.seed = 3;
    const auto one = bootstrap(d, aug_const_att, opt);
    opt.threads = 3;
    const auto three = bootstrap(d, aug_const_att, opt);
    EXPECT_EQ(one.std_error, three.std_error);
    EXPECT_EQ(one.ci_low, three.ci_low);
    EXPECT_EQ(one.ci_high, three.ci_high);
    EXPECT_EQ(one.replicates_used, 120u);
    EXPECT_LE(one.ci_low, one.ci_high);
}

TEST(Bootstrap, AgreesWithInfluenceVariance) {
    Rng rng(53);
    const auto d = oracle::random_dataset(rng, 2, 150);
    BootstrapOptions opt;
    opt.replicates = 400;
    opt.seed = 11;
    const auto boot = bootstrap(d, aug_const_att, opt);

    const auto design = DesignSpec::main_effects(2);
    const auto fp = estimate_propensities(d, design, design);
    const auto models = fit_outcome_models(d, BiasSpec::constant(), design);
    const double tau = estimate_wate(d, fp, models, EstimandSpec::att()).point;
    const auto sandwich = if_variance(d, fp, models, EstimandSpec::att(), tau);
    EXPECT_NEAR(boot.std_error / sandwich.std_error, 1.0, 0.3);
    EXPECT_NEAR(0.5 * (sandwich.ci_low + sandwich.ci_high), tau, 1e-12);
    EXPECT_NEAR((sandwich.ci_high - tau) / sandwich.std_error, 1.959963984540054, 1e-9);
}

TEST(Bootstrap, RejectsBadOptions) {
    Rng rng(54);
    const auto d = oracle::random_dataset(rng, 1);
    BootstrapOptions opt;
    opt.replicates = 99;
    EXPECT_THROW(bootstrap(d, aug_const_att, opt), DimensionMismatch);
    opt.replicates = 100;
    opt.level = 1.0;
    EXPECT_THROW(bootstrap(d, aug_const_att, opt), DimensionMismatch);
}

TEST(Bootstrap, TooManyFailedReplicates) {
    Rng rng(55);
    const auto d = oracle::random_dataset(rng, 1);
    std::atomic<int> calls{0};
    // every tenth replicate fails: 10% exceeds the 5% default
    const EstimatorClosure flaky = [&](const TrialDataset&) -> double {
        if (calls++ % 10 == 9) throw Separation("forced");
        return 0.0;
    };
    BootstrapOptions opt;
    opt.replicates = 100;
    EXPECT_THROW(bootstrap(d, flaky, opt), TooManyFailures);
    calls = 0;
    opt.max_failure_rate = 0.2;
    const auto r = bootstrap(d, flaky, opt);
    EXPECT_EQ(r.replicates_failed, 10u);
    EXPECT_EQ(r.replicates_used, 90u);
}
