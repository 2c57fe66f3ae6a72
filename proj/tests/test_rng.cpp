#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "hybridtrial/rng.hpp"
#include "hybridtrial/stats.hpp"

using namespace hybridtrial;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, EngineIsStandardMt19937_64) {
    // 10000th output of the default-seeded engine is fixed by the C++ standard
    Rng r(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = r.next_u64();
    EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformStrictlyInsideUnitInterval) {
    Rng r(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, NormalMoments) {
    Rng r(7);
    std::vector<double> v(200000);
    for (auto& x : v) x = r.normal();
    EXPECT_NEAR(stats::mean(v), 0.0, 0.01);
    EXPECT_NEAR(stats::sample_sd(v), 1.0, 0.01);
}

TEST(Rng, NormalConsumesTwoUniforms) {
    Rng a(9), b(9);
    a.normal();
    b.uniform();
    b.uniform();
    EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, IndexInRange) {
    Rng r(3);
    std::set<std::size_t> seen;
    for (int i = 0; i < 10000; ++i) {
        const auto k = r.index(7);
        ASSERT_LT(k, 7u);
        seen.insert(k);
    }
    EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, ChildSeedsDistinct) {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s)
        for (std::uint64_t k = 0; k < 500; ++k) seeds.insert(child_seed(s, k));
    EXPECT_EQ(seeds.size(), 20u * 500u);
}

TEST(Rng, ChildSeedPinned) {
    // frozen values: changing them changes every simulated table
    EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(child_seed(1, 0), child_seed(1, 0));
    EXPECT_NE(child_seed(1, 0), child_seed(0, 1));
}
