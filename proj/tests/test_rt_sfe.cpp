#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "two_settle/rt_sfe.hpp"

using namespace two_settle;

namespace {

EffectiveRTCurve unit_affine(double pf = 0.0) { return {ConventionalCurve::affine(1.0, 0.0), pf}; }

ResidualState wide_state(std::vector<double> caps, double dmax = 10.0, double dmin = 0.0) {
    std::vector<double> dr;
    for (int t = 0; t < 24; ++t) dr.push_back(dmin + (dmax - dmin) * t / 23.0);
    return make_residual_state(dr, std::move(caps));
}

void check_invariants(const StitchedSFE& s) {
    ASSERT_EQ(s.kind, SFEKind::equilibrium);
    auto bp = s.breakpoints();
    for (std::size_t j = 1; j < bp.size(); ++j) EXPECT_LT(bp[j - 1], bp[j]);
    for (std::size_t j = 0; j < s.knots.size(); ++j) {
        double g = bp[j + 1];
        EXPECT_NEAR(s.aggregate(g), s.caps[j], 1e-7);
        double eps = 1e-9 * std::max(1.0, g);
        EXPECT_LE(std::abs(s.aggregate(g + eps) - s.aggregate(g)), 1e-7);
    }
    double hi = bp.back() * 1.5 + 1.0, prev = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        double p = hi * i / 2000.0;
        double v = s.aggregate(p);
        EXPECT_GE(v, prev - 1e-10) << p;
        prev = v;
    }
}

}  // namespace

TEST(ResidualState, CapsFromPaths) {
    MarketScenario sc;
    sc.demand = {2.0, 2.0};
    sc.capacity = {{1.5, 1.2}, {0.8, 1.4}};
    DAOutcome da;
    da.supply_per_supplier = 1.0;
    da.suppliers = 2;
    auto rs = residual_state(sc, da);
    EXPECT_NEAR(rs.caps[0], 0.2, 1e-15);
    EXPECT_EQ(rs.caps[1], 0.0);
    EXPECT_EQ(rs.strategic_count(), 1);
    EXPECT_EQ(rs.nonstrategic_count, 1);
    EXPECT_NEAR(rs.residual_demand[0], 2.0 - 1.0 - 0.8, 1e-15);
}

TEST(ResidualState, CaseOneSignal) {
    MarketScenario sc;
    sc.demand = {1.0, 1.0};
    sc.capacity = {{3.0, 3.0}, {3.0, 3.0}};
    DAOutcome da;
    da.supply_per_supplier = 0.5;
    da.lse_demand = 1.0;
    auto rs = residual_state(sc, da);
    EXPECT_FALSE(rs.rt_active());
    EXPECT_EQ(solve_rt_sfe(rs, unit_affine()).kind, SFEKind::no_market);
}

TEST(ResidualState, TiesArePerturbed) {
    auto rs = make_residual_state({1.0}, {0.5, 0.5, 0.5});
    EXPECT_LT(rs.sorted_caps[0], rs.sorted_caps[1]);
    EXPECT_LT(rs.sorted_caps[1], rs.sorted_caps[2]);
    EXPECT_NEAR(rs.sorted_caps[2], 0.5, 1e-11);
}

TEST(Stitch, DocumentedInvalidCandidate) {
    auto rs = wide_state({1, 2, 3});
    auto out = stitch_candidate(2.0, rs, unit_affine());
    ASSERT_FALSE(out.valid());
    EXPECT_EQ(out.invalid.branch, 2);
    EXPECT_EQ(out.invalid.reason, InvalidReason::non_monotone);
}

TEST(Stitch, LargeConstantDrivesFirstBreakpointToZero) {
    auto rs = wide_state({1, 2, 3});
    auto pb = prepare_sfe(rs, unit_affine(), {});
    double prev = 1e300;
    for (double c : {10.0, 100.0, 1000.0, 1e4}) {
        auto g = find_breakpoint(pb.kernels[0], c, 1.0);
        ASSERT_TRUE(g);
        EXPECT_LT(*g, prev);
        prev = *g;
    }
    EXPECT_LT(prev, 1e-7);
}

TEST(Solve, MinimalConstantCertificate) {
    auto rs = wide_state({1, 2, 3});
    auto s = solve_rt_sfe(rs, unit_affine());
    check_invariants(s);
    double c1 = s.constants[0];
    EXPECT_TRUE(stitch_candidate(c1, rs, unit_affine()).valid());
    EXPECT_FALSE(stitch_candidate(c1 * (1 - 1e-3), rs, unit_affine()).valid());
    // dense scan oracle
    double first_valid = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        double c = 1.5 + 1.5 * i / 4000.0;
        if (stitch_candidate(c, rs, unit_affine()).valid()) {
            first_valid = c;
            break;
        }
    }
    EXPECT_NEAR(c1, first_valid, 1.5 / 4000.0 + 1e-9);
}

TEST(Solve, IdempotentRestitch) {
    auto rs = wide_state({0.4, 0.9, 1.3});
    auto s = solve_rt_sfe(rs, unit_affine(0.2));
    auto again = stitch_candidate(s.constants[0], rs, unit_affine(0.2));
    ASSERT_TRUE(again.valid());
    for (double p : {0.1, 0.3, 0.7, 1.5, 3.0}) EXPECT_EQ(again.sfe->aggregate(p), s.aggregate(p));
}

TEST(Solve, TwoSupplierDenseGridOracle) {
    for (double pf : {0.0, 0.3}) {
        auto rs = wide_state({0.5, 1.0});
        auto s = solve_rt_sfe(rs, unit_affine(pf));
        check_invariants(s);
        // scan from a clearly invalid constant upward
        double lo = -5.0, hi = 10.0;
        for (int pass = 0; pass < 4; ++pass) {
            double step = (hi - lo) / 1000.0, found = hi;
            for (int i = 0; i <= 1000; ++i) {
                double c = lo + step * i;
                if (stitch_candidate(c, rs, unit_affine(pf)).valid()) {
                    found = c;
                    break;
                }
            }
            lo = found - step;
            hi = found;
        }
        EXPECT_NEAR(s.constants[0], hi, 1e-6 * std::max(1.0, std::abs(hi)));
    }
}

TEST(Solve, ShiftFromMinimumResidual) {
    auto rs = wide_state({1, 2, 3}, 5.0, 0.5);
    auto s = solve_rt_sfe(rs, unit_affine());
    EXPECT_NEAR(s.shift, 0.5, 1e-12);
    auto rs0 = wide_state({1, 2, 3}, 5.0, 0.0);
    auto s0 = solve_rt_sfe(rs0, unit_affine());
    for (int i = 0; i <= 200; ++i) {
        double p = 4.0 * i / 200.0;
        EXPECT_NEAR(s.aggregate(p), s0.aggregate(std::max(p - s.shift, 0.0)), 1e-12);
    }
}

TEST(Solve, TruncationStopsInduction) {
    auto rs = wide_state({0.3, 0.6, 2.0, 3.0}, 1.2);
    auto s = solve_rt_sfe(rs, unit_affine());
    EXPECT_EQ(s.truncation_index, 3);
    EXPECT_EQ(s.validated_branches, 2);
    EXPECT_EQ(s.tail_m, 1);
    check_invariants(s);
}

TEST(Solve, CompetitiveFallback) {
    auto rs = make_residual_state({0.5, 1.5}, {1.0, 0.0});
    auto s = solve_rt_sfe(rs, unit_affine());
    EXPECT_EQ(s.kind, SFEKind::competitive);
    EXPECT_EQ(clear_rt(s, rs, 0), 0.0);
    EXPECT_NEAR(clear_rt(s, rs, 1), 0.5, 1e-12);
    SFEOptions o;
    o.competitive_fallback = false;
    EXPECT_THROW(solve_rt_sfe(rs, unit_affine(), o), NoCompetition);
}

TEST(Clear, Examples) {
    auto rs = make_residual_state({0.0, 4.0}, {1.0, 1.0 + 1e-13, 1.0 + 2e-13});
    StitchedSFE flat;
    flat.kind = SFEKind::competitive;
    flat.curve = unit_affine();
    flat.caps = rs.sorted_caps;
    EXPECT_EQ(clear_rt(flat, rs, 0), 0.0);
    EXPECT_NEAR(clear_rt(flat, rs, 1), 1.0, 1e-10);
    auto injected = [](double p) { return 3.0 * (2.0 * std::sqrt(p) - p) + p; };
    double ps = clear_market(injected, 2.0);
    double expect = std::pow((3.0 - std::sqrt(5.0)) / 2.0, 2);
    EXPECT_NEAR(ps, expect, 1e-10 * expect);
    EXPECT_NEAR(ps, 0.145898, 1e-6);
}

TEST(Clear, PayoffExamples) {
    auto rs = make_residual_state({0.0, 1.0}, {0.2, 0.5});
    auto s = solve_rt_sfe(rs, unit_affine());
    EXPECT_EQ(rt_payoff(0, s, rs, 0), 0.0);
    double p = clear_rt(s, rs, 1);
    EXPECT_NEAR(rt_payoff(0, s, rs, 1), std::min(s.aggregate(p), rs.effective_caps[0]) * p, 1e-15);
    EXPECT_NEAR(0.618 * 0.1459, 0.09017, 1e-5);
}

TEST(BestResponse, EquilibriumPassesFlattenedFails) {
    auto rs = wide_state({0.4, 0.7, 1.1}, 2.0);
    auto curve = unit_affine(0.1);
    auto s = solve_rt_sfe(rs, curve);
    for (int i = 0; i < 3; ++i) {
        auto r = best_response_check(s, rs, i, 401);
        EXPECT_LE(r.max_relative, 1e-4) << i << " t=" << r.worst_t;
    }
    auto bad = unstitched_sfe(rs, curve, s.constants[0] * 0.5);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, best_response_check(bad, rs, i, 401).max_improvement);
    EXPECT_GT(worst, 0.0);
    auto quiet = make_residual_state({0.0, -1.0}, {0.4, 0.7});
    EXPECT_EQ(best_response_check(solve_rt_sfe(quiet, curve), quiet, 0, 401).max_improvement, 0.0);
}

TEST(Solve, PayoffDecreasingInConstant) {
    auto rs = wide_state({0.4, 0.7, 1.1}, 2.0);
    auto curve = unit_affine(0.1);
    auto s = solve_rt_sfe(rs, curve);
    auto total = [&](const StitchedSFE& x) {
        double v = 0.0;
        for (std::size_t t = 0; t < rs.steps(); ++t) v += rt_payoff(0, x, rs, t);
        return v;
    };
    double base = total(s);
    for (double d : {1e-3, 1e-2}) {
        auto up = stitch_candidate(s.constants[0] * (1 + d), rs, curve);
        ASSERT_TRUE(up.valid());
        EXPECT_LE(total(*up.sfe), base + 1e-12);
    }
}

TEST(Solve, PowerFamilyInvariants) {
    EffectiveRTCurve curve{ConventionalCurve::power(1.2, 0.6, 0.05), 0.1};
    auto rs = wide_state({0.3, 0.5, 0.8}, 3.0);
    auto s = solve_rt_sfe(rs, curve);
    check_invariants(s);
    EXPECT_FALSE(stitch_candidate(s.constants[0] * (1 - 1e-3), rs, curve).valid());
}

TEST(Solve, Timing) {
    auto rs = wide_state({0.35, 0.5, 0.62}, 1.5);
    auto curve = unit_affine(0.2);
    auto t0 = std::chrono::steady_clock::now();
    int n = 200;
    double sink = 0.0;
    for (int i = 0; i < n; ++i) {
        auto s = solve_rt_sfe(rs, curve);
        for (double p : clear_rt_all(s, rs)) sink += p;
    }
    double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count() / n;
    std::printf("solve+clear per state: %.1f us (sink %g)\n", us, sink);
    SUCCEED();
}
