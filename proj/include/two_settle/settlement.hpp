#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "curves.hpp"
#include "errors.hpp"
#include "rt_sfe.hpp"
#include "rt_stage.hpp"
#include "types.hpp"

namespace two_settle {

// Cash flows of one hour; positive numbers are receipts of the named party.
struct SettlementHour {
    int case_tag = 1;  // 1: D_r <= 0, 2: D_r > 0
    double da_price = 0.0;
    double rt_price = 0.0;
    double demand = 0.0;
    double residual_demand = 0.0;

    double lse_da_payment = 0.0;
    double lse_rt_payment = 0.0;  // (D - D_l) p_s, signed
    std::vector<double> supplier_delivered;  // min{S, Q_i}
    std::vector<double> supplier_da_revenue;
    std::vector<double> supplier_rt_quantity;
    std::vector<double> supplier_rt_revenue;
    std::vector<double> shortfall_penalty;
    std::vector<double> curtailed_renewable;
    double conventional_da_revenue = 0.0;
    double conventional_rt_quantity = 0.0;
    double conventional_rt_revenue = 0.0;
    double curtailed_conventional = 0.0;
    double trader_da_payment = 0.0;  // all traders
    double trader_rt_receipt = 0.0;
    double trader_pnl = 0.0;          // all traders, (p_s - p_f) V
    double per_trader_pnl = 0.0;      // 0 when the trader count is unbounded
    double savings = 0.0;             // (p_s - p_f) D_l

    double lse_cost() const { return lse_da_payment + lse_rt_payment; }

    double da_imbalance() const {
        double s = lse_da_payment + trader_da_payment - conventional_da_revenue;
        for (double x : supplier_da_revenue) s -= x;
        return s;
    }

    double rt_imbalance() const {
        double s = lse_rt_payment - trader_rt_receipt - conventional_rt_revenue;
        for (std::size_t i = 0; i < supplier_rt_revenue.size(); ++i) s += shortfall_penalty[i] - supplier_rt_revenue[i];
        return s;
    }

    // sum of all participants' net receipts; the ISO clears to zero
    double net_flow() const { return -(da_imbalance() + rt_imbalance()); }
};

struct SettlementReport {
    std::vector<SettlementHour> hours;
    int suppliers = 0;
    int trader_count = 0;  // -1 for the unbounded path

    double lse_total_cost = 0.0;
    double lse_savings = 0.0;
    double all_rt_benchmark = 0.0;  // sum p_s D
    std::vector<double> supplier_totals;
    double conventional_total = 0.0;
    double trader_total = 0.0;
    double max_abs_net_flow = 0.0;
    double max_abs_rt_imbalance = 0.0;
    double max_abs_da_imbalance = 0.0;
    // max over Case-2 hours of |LSE cost - (p_s D - (p_s - p_f) D_l)|
    double max_savings_identity_error = 0.0;
};

inline SettlementReport settle(const DAOutcome& da, const MarketScenario& sc, const StitchedSFE& sfe,
                               const ResidualState& rs, int trader_count = 0) {
    const std::size_t T = sc.steps(), n = sc.suppliers();
    if (int(n) != da.suppliers) throw DomainError("settle: supplier count does not match the DA outcome");
    if (rs.steps() != T || rs.caps.size() != n) throw DomainError("settle: residual state does not match the scenario");
    for (const auto& q : sc.capacity)
        if (q.size() != T) throw DomainError("settle: capacity path length mismatch");
    const double pf = da.clearing_price, S = da.supply_per_supplier, dl = da.lse_demand, V = da.virtual_load;

    SettlementReport rep;
    rep.suppliers = int(n);
    rep.trader_count = trader_count;
    rep.supplier_totals.assign(n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        SettlementHour h;
        h.da_price = pf;
        h.demand = sc.demand[t];
        h.residual_demand = rs.residual_demand[t];
        h.case_tag = h.residual_demand > 0.0 ? 2 : 1;
        h.rt_price = clear_rt(sfe, rs, t);
        const double ps = h.rt_price;
        h.supplier_delivered.assign(n, 0.0);
        h.supplier_da_revenue.assign(n, pf * S);
        h.supplier_rt_quantity.assign(n, 0.0);
        h.supplier_rt_revenue.assign(n, 0.0);
        h.shortfall_penalty.assign(n, 0.0);
        h.curtailed_renewable.assign(n, 0.0);
        double delivered = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            h.supplier_delivered[i] = std::min(S, sc.capacity[i][t]);
            delivered += h.supplier_delivered[i];
        }
        h.lse_da_payment = pf * dl;
        h.conventional_da_revenue = pf * da.conventional;
        h.trader_da_payment = pf * V;
        if (h.case_tag == 1) {
            // conventional output is curtailed first, then renewables pro-rata to delivery
            double excess = -h.residual_demand;
            h.curtailed_conventional = std::min(da.conventional, excess);
            double rest = excess - h.curtailed_conventional;
            if (rest > 0.0 && delivered > 0.0)
                for (std::size_t i = 0; i < n; ++i) h.curtailed_renewable[i] = rest * h.supplier_delivered[i] / delivered;
        } else {
            double strategic = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                h.supplier_rt_quantity[i] = sfe.supplier(ps, rs.effective_caps[i]);
                strategic += h.supplier_rt_quantity[i];
            }
            if (strategic > h.residual_demand) {
                for (auto& x : h.supplier_rt_quantity) x *= h.residual_demand / strategic;
                strategic = h.residual_demand;
            }
            h.conventional_rt_quantity = h.residual_demand - strategic;
            h.conventional_rt_revenue = ps * h.conventional_rt_quantity;
            for (std::size_t i = 0; i < n; ++i) {
                h.supplier_rt_revenue[i] = ps * h.supplier_rt_quantity[i];
                if (rs.effective_caps[i] <= 0.0 && sc.capacity[i][t] < S)
                    h.shortfall_penalty[i] = (S - sc.capacity[i][t]) * ps;
            }
        }
        h.lse_rt_payment = (h.demand - dl) * ps;
        h.trader_rt_receipt = ps * V;
        h.trader_pnl = (ps - pf) * V;
        h.per_trader_pnl = trader_count > 0 ? h.trader_pnl / trader_count : 0.0;
        h.savings = (ps - pf) * dl;

        rep.lse_total_cost += h.lse_cost();
        rep.lse_savings += h.savings;
        rep.all_rt_benchmark += ps * h.demand;
        for (std::size_t i = 0; i < n; ++i)
            rep.supplier_totals[i] += h.supplier_da_revenue[i] + h.supplier_rt_revenue[i] - h.shortfall_penalty[i];
        rep.conventional_total += h.conventional_da_revenue + h.conventional_rt_revenue;
        rep.trader_total += h.trader_pnl;
        rep.max_abs_net_flow = std::max(rep.max_abs_net_flow, std::abs(h.net_flow()));
        rep.max_abs_rt_imbalance = std::max(rep.max_abs_rt_imbalance, std::abs(h.rt_imbalance()));
        rep.max_abs_da_imbalance = std::max(rep.max_abs_da_imbalance, std::abs(h.da_imbalance()));
        if (h.case_tag == 2)
            rep.max_savings_identity_error = std::max(
                rep.max_savings_identity_error, std::abs(h.lse_cost() - (ps * h.demand - (ps - pf) * dl)));
        rep.hours.push_back(std::move(h));
    }
    return rep;
}

inline SettlementReport settle(const DAOutcome& da, const MarketScenario& sc, const RTContext& ctx,
                               int trader_count = 0) {
    if (int(sc.suppliers()) != ctx.suppliers) throw DomainError("settle: scenario supplier count does not match the market");
    auto rs = residual_state(sc, da);
    auto sfe = solve_rt_sfe(rs, EffectiveRTCurve{ctx.conventional, da.clearing_price}, ctx.sfe);
    return settle(da, sc, sfe, rs, trader_count);
}

}  // namespace two_settle
