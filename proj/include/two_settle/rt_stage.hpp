#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "curves.hpp"
#include "errors.hpp"
#include "rt_sfe.hpp"
#include "types.hpp"

namespace two_settle {

struct RTContext {
    ConventionalCurve conventional;
    int suppliers = 3;
    SFEOptions sfe;
};

// RT stage of one scenario at a given DA price and per-supplier DA quantity.
struct RTScenarioOutcome {
    SFEKind kind = SFEKind::no_market;
    int strategic = 0;
    int truncation = 0;
    std::vector<double> prices;           // p_s(t)
    std::vector<double> strategic_supply; // sum_i min{S-bar(p_s), Q_i^r}
    std::vector<double> strategic_slope;  // sum_i d/dp min{S-bar, Q_i^r} at p_s
    std::vector<char> active;             // D_r(t) > 0
    StitchedSFE sfe;
    std::vector<double> caps;

    // sum_i min{S-bar(p), Q_i^r} on this scenario's curves at an arbitrary price
    double supply_at(double p) const {
        double s = 0.0;
        for (double q : caps) s += sfe.supplier(p, q);
        return s;
    }

    // Hours sharing a regime code can be differenced in the DA price. A zero price and a positive
    // shift are separate regimes: the competitive price jumps from 0 to the DA price when capacity
    // runs out, and the shift jumps from 0 to the DA price when the minimal residual turns positive.
    int regime(std::size_t t) const {
        if (!active[t]) return -1;
        return int(kind) * 10000000 + strategic * 10000 + truncation * 100 + (sfe.shift > 0.0 ? 10 : 0) +
               (prices[t] > 0.0 ? 1 : 0);
    }
};

inline DAOutcome da_outcome_at(double price, double supply, const RTContext& ctx) {
    DAOutcome da;
    da.clearing_price = price;
    da.supply_per_supplier = supply;
    da.conventional = eval_conventional(ctx.conventional, price);
    da.suppliers = ctx.suppliers;
    da.lse_demand = ctx.suppliers * supply + da.conventional;
    return da;
}

inline RTScenarioOutcome solve_rt_stage(const ResidualState& rs, const EffectiveRTCurve& curve, const RTContext& ctx) {
    RTScenarioOutcome out;
    auto sfe = solve_rt_sfe(rs, curve, ctx.sfe);
    out.kind = sfe.kind;
    out.strategic = rs.strategic_count();
    out.truncation = sfe.truncation_index;
    const std::size_t T = rs.steps();
    out.prices.resize(T);
    out.strategic_supply.assign(T, 0.0);
    out.strategic_slope.assign(T, 0.0);
    out.active.assign(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
        double p = clear_rt(sfe, rs, t);
        out.prices[t] = p;
        out.active[t] = rs.residual_demand[t] > 0.0;
        if (!out.active[t]) continue;
        double s = 0.0, ds = 0.0;
        // an hour clearing on the shift kink takes the left derivative 0
        bool on_kink = p - sfe.shift <= 1e-8 * std::max(1.0, p);
        for (double q : rs.sorted_caps) {
            s += sfe.supplier(p, q);
            if (!on_kink) ds += sfe.supplier_derivative(p, q);
        }
        out.strategic_supply[t] = s;
        out.strategic_slope[t] = ds;
    }
    out.caps = rs.sorted_caps;
    out.sfe = std::move(sfe);
    return out;
}

inline RTScenarioOutcome solve_rt_stage(const MarketScenario& sc, double da_price, double da_supply,
                                        const RTContext& ctx, std::size_t scenario_id = 0) {
    if (int(sc.suppliers()) != ctx.suppliers) throw DomainError("scenario supplier count does not match the market");
    try {
        auto rs = residual_state(sc, da_outcome_at(da_price, da_supply, ctx));
        return solve_rt_stage(rs, EffectiveRTCurve{ctx.conventional, da_price}, ctx);
    } catch (const InfeasibleError& e) {
        throw InfeasibleError("scenario " + std::to_string(scenario_id) + ": " + e.what(), e.shortfall);
    }
}

}  // namespace two_settle
