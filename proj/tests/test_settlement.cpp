#include <gtest/gtest.h>

#include "two_settle/scenarios.hpp"
#include "two_settle/settlement.hpp"

using namespace two_settle;

namespace {

RTContext unit_rt(int n) {
    RTContext c;
    c.conventional = ConventionalCurve::affine(1.0, 0.0);
    c.suppliers = n;
    return c;
}

MarketScenario path(std::vector<double> d, std::vector<std::vector<double>> q) {
    MarketScenario s;
    s.demand = std::move(d);
    s.capacity = std::move(q);
    return s;
}

}  // namespace

TEST(Settle, LseCostAndSavings) {
    DAOutcome da{0.2, 0.5, 0.25, 0.2, 0.2, 2};
    ASSERT_NEAR(da.clearing_residual(), 0.0, 1e-15);
    auto r = settle(da, path({1.0}, {{0.25}, {0.25}}), unit_rt(2), 4);
    ASSERT_EQ(r.hours.size(), 1u);
    const auto& h = r.hours[0];
    EXPECT_EQ(h.case_tag, 2);
    EXPECT_NEAR(h.rt_price, 0.5, 1e-9);
    EXPECT_NEAR(r.lse_total_cost, 0.35, 1e-9);
    EXPECT_NEAR(r.lse_savings, 0.15, 1e-9);
    EXPECT_NEAR(r.all_rt_benchmark - r.lse_savings, r.lse_total_cost, 1e-12);
    EXPECT_NEAR(h.trader_pnl, 0.3 * 0.2, 1e-9);
    EXPECT_NEAR(h.per_trader_pnl, 0.3 * 0.2 / 4, 1e-9);
    EXPECT_LT(r.max_abs_net_flow, 1e-12);
}

TEST(Settle, ShortfallPenalty) {
    DAOutcome da{0.1, 1.1, 0.5, 0.1, 0.0, 2};
    auto r = settle(da, path({1.2}, {{0.3}, {0.5}}), unit_rt(2));
    const auto& h = r.hours[0];
    EXPECT_NEAR(h.residual_demand, 0.3, 1e-12);
    EXPECT_NEAR(h.rt_price, 0.4, 1e-9);
    EXPECT_NEAR(h.shortfall_penalty[0], 0.08, 1e-9);
    EXPECT_EQ(h.shortfall_penalty[1], 0.0);
    EXPECT_NEAR(r.supplier_totals[0], 0.05 - 0.08, 1e-9);
    EXPECT_LT(r.max_abs_net_flow, 1e-12);
}

TEST(Settle, CaseOneHasNoRtPayments) {
    DAOutcome da{0.3, 0.9, 0.2, 0.3, 0.0, 3};
    auto r = settle(da, path({0.5, 0.9, 0.1}, {{0.4, 0.4, 0.4}, {0.1, 0.3, 0.1}, {1.0, 1.0, 1.0}}), unit_rt(3));
    double pay = 0.0;
    for (const auto& h : r.hours) {
        EXPECT_EQ(h.case_tag, 1);
        EXPECT_EQ(h.rt_price, 0.0);
        EXPECT_EQ(h.lse_rt_payment, 0.0);
        for (double x : h.shortfall_penalty) EXPECT_EQ(x, 0.0);
        for (double x : h.supplier_rt_revenue) EXPECT_EQ(x, 0.0);
        pay += h.lse_da_payment;
    }
    EXPECT_NEAR(r.lse_total_cost, 3 * 0.3 * 0.9, 1e-12);
    EXPECT_NEAR(pay, r.lse_total_cost, 1e-15);
}

TEST(Settle, CaseOneCurtailsConventionalFirst) {
    DAOutcome da{0.3, 0.9, 0.2, 0.3, 0.0, 3};
    auto r = settle(da, path({0.1, 0.75}, {{0.4, 0.4}, {0.4, 0.4}, {0.4, 0.4}}), unit_rt(3));
    EXPECT_NEAR(r.hours[0].curtailed_conventional, 0.3, 1e-12);
    EXPECT_NEAR(r.hours[0].curtailed_renewable[0], 0.5 / 3, 1e-12);
    EXPECT_NEAR(r.hours[1].curtailed_conventional, 0.15, 1e-12);
    EXPECT_EQ(r.hours[1].curtailed_renewable[0], 0.0);
}

TEST(Settle, ConservesMoneyWithStrategicSuppliers) {
    ScenarioModel m;
    m.capacity = Marginal::uniform(0.0, 0.8);
    m.seed = 4;
    auto sc = sample(m, 20);
    DAOutcome da{0.2, 0.4, 0.1, 0.2, 0.1, 3};
    for (const auto& s : sc) {
        auto r = settle(da, s, unit_rt(3), 2);
        EXPECT_LT(r.max_abs_net_flow, 1e-9);
        EXPECT_LT(r.max_savings_identity_error, 1e-12);
        for (const auto& h : r.hours) {
            if (h.case_tag != 2) continue;
            EXPECT_GE(h.conventional_rt_quantity, -1e-12);
            double q = h.conventional_rt_quantity;
            for (double x : h.supplier_rt_quantity) q += x;
            EXPECT_NEAR(q, h.residual_demand, 1e-9);
        }
    }
}

TEST(Settle, RejectsMismatchedScenario) {
    DAOutcome da{0.2, 0.4, 0.1, 0.2, 0.0, 3};
    EXPECT_THROW(settle(da, path({1.0}, {{0.5}, {0.5}}), unit_rt(2)), DomainError);
}
