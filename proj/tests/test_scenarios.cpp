#include <gtest/gtest.h>

#include <cmath>

#include "two_settle/scenarios.hpp"

using namespace two_settle;

TEST(Sample, UniformDemandStaysInBounds) {
    ScenarioModel m;
    m.demand = Marginal::uniform(0.0, 1.0);
    m.seed = 99;
    for (std::uint64_t seed : {1ULL, 2ULL, 12345ULL}) {
        m.seed = seed;
        auto sc = sample(m, 1);
        ASSERT_EQ(sc.size(), 1u);
        ASSERT_EQ(sc[0].steps(), 24u);
        for (double d : sc[0].demand) {
            EXPECT_GE(d, 0.0);
            EXPECT_LE(d, 1.0);
        }
    }
}

TEST(Sample, DegenerateDemandIsConstant) {
    ScenarioModel m;
    m.demand = Marginal::uniform(0.7, 0.7);
    m.demand_rho = 0.5;
    auto sc = sample(m, 3);
    for (const auto& s : sc)
        for (double d : s.demand) EXPECT_EQ(d, 0.7);
}

TEST(Sample, SameSeedIsBitIdentical) {
    ScenarioModel m;
    m.demand_rho = 0.6;
    m.capacity = Marginal::beta(0.0, 0.6, 2.0, 2.0);
    m.capacity_rho = 0.9;
    m.seed = 42;
    auto a = sample(m, 20), b = sample(m, 20);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].demand, b[k].demand);
        EXPECT_EQ(a[k].capacity, b[k].capacity);
    }
    m.seed = 43;
    EXPECT_NE(sample(m, 1)[0].demand, a[0].demand);
}

TEST(Sample, OffsetDrawsContinueTheSequence) {
    ScenarioModel m;
    m.seed = 5;
    auto all = sample(m, 10);
    auto tail = sample(m, 4, 6);
    for (std::size_t k = 0; k < tail.size(); ++k) EXPECT_EQ(tail[k].demand, all[6 + k].demand);
}

TEST(Sample, AutocorrelationMatchesRho) {
    ScenarioModel m;
    m.time_steps = 2;
    m.demand = Marginal::truncated_normal(0.0, 100.0, 50.0, 1.0);
    m.demand_rho = 0.8;
    m.capacity = Marginal::uniform(0.0, 1.0);
    m.seed = 3;
    auto sc = sample(m, 20000);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& s : sc) {
        double x = s.demand[0] - 50.0, y = s.demand[1] - 50.0;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    EXPECT_NEAR(sxy / std::sqrt(sxx * syy), 0.8, 0.02);
}

TEST(Sample, InvalidBoundsRejected) {
    ScenarioModel m;
    m.demand = Marginal::uniform(1.0, 0.5);
    EXPECT_THROW(sample(m, 1), ConfigError);
    m.demand = Marginal::uniform(0.0, 1.0);
    m.capacity_rho = 1.0;
    EXPECT_THROW(sample(m, 1), ConfigError);
}

TEST(Density, Examples) {
    ScenarioModel m;
    m.capacity = Marginal::uniform(0.0, 2.0);
    EXPECT_DOUBLE_EQ(capacity_density(m, 1.0), 0.5);
    EXPECT_EQ(capacity_density(m, -0.1), 0.0);
    EXPECT_EQ(capacity_density(m, 2.5), 0.0);
    m.capacity = Marginal::beta(0.0, 1.0, 2.0, 2.0);
    EXPECT_NEAR(capacity_density(m, 0.5), 1.5, 1e-12);
}

TEST(Density, TruncatedNormalIntegratesToOne) {
    auto d = Marginal::truncated_normal(0.0, 1.0, 0.3, 0.2);
    double s = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) s += d.pdf((i + 0.5) / n) / n;
    EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(Shortfall, Examples) {
    std::vector<ShortfallSample> xs;
    for (int k = 0; k < 100; ++k) xs.push_back({0.01 * k, 3.0, -0.5});
    auto zero = shortfall_moment(0.0, xs);
    EXPECT_EQ(zero.probability_weighted_price, 0.0);
    EXPECT_EQ(zero.shortfall_integral, 0.0);
    auto full = shortfall_moment(1.0, xs);
    EXPECT_DOUBLE_EQ(full.probability_weighted_price, 3.0);
    EXPECT_THROW(shortfall_moment(0.5, {}), DomainError);
}

TEST(Shortfall, UniformCapacityHalf) {
    ScenarioModel m;
    m.capacity = Marginal::uniform(0.0, 1.0);
    m.suppliers = 1;
    m.seed = 17;
    std::vector<ShortfallSample> xs;
    for (const auto& s : sample(m, 400))
        for (double q : s.capacity[0]) xs.push_back({q, 1.0, 0.0});
    auto r = shortfall_moment(0.5, xs);
    EXPECT_NEAR(r.probability_weighted_price, 0.5, 4.0 * r.probability_weighted_price_se + 1e-3);
}
