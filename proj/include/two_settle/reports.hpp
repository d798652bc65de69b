#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "config.hpp"
#include "da_eq.hpp"
#include "empirics.hpp"
#include "io.hpp"
#include "settlement.hpp"

namespace two_settle {

// Hash of everything that can change numeric output; workers and output settings are excluded.
inline std::string config_hash(const RunConfig& c) {
    auto j = to_json(c);
    j.erase("output");
    j["numerics"].erase("workers");
    return hex64(fnv1a(j.dump()));
}

// Renewable DA curve of the config: the fixed point for N_S >= 2, the zero curve without renewables.
inline DASolution solve_da_curve(const TwoSettlementMarket& m, const std::vector<MarketScenario>& scenarios) {
    if (m.suppliers() == 0) {
        DASolution s;
        s.curve = DACurve::zero(da_price_grid(m));
        return s;
    }
    return solve_da_sfe(m, scenarios);
}

inline std::string trader_label(int n) { return n == infinite_traders ? std::string("inf") : std::to_string(n); }

inline nlohmann::json outcome_json(const DAOutcome& o) {
    return {{"clearing_price", o.clearing_price},
            {"lse_demand", o.lse_demand},
            {"supply_per_supplier", o.supply_per_supplier},
            {"conventional", o.conventional},
            {"virtual_load", o.virtual_load},
            {"suppliers", o.suppliers},
            {"clearing_residual", o.clearing_residual()}};
}

inline nlohmann::json curve_json(const DACurve& c) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t j = 0; j < c.prices.size(); ++j) pts.push_back({c.prices[j], c.values[j]});
    return {{"supply_constant", c.constant}, {"grid", pts}};
}

inline nlohmann::json equilibrium_json(const DAEquilibrium& e) {
    nlohmann::json j = {{"trader_count", trader_label(e.trader_count)},
                        {"outcome", outcome_json(e.outcome)},
                        {"expected_rt_price", e.expected_rt_price},
                        {"expected_rt_price_se", e.expected_rt_price_se},
                        {"price_sensitivity", e.price_sensitivity},
                        {"gap", e.gap},
                        {"gap_se", e.gap_se},
                        {"per_trader_quantity", e.per_trader_quantity},
                        {"trader_slope", e.trader_slope},
                        {"iterations", e.iterations},
                        {"cap_binding", e.cap_binding},
                        {"foc_residual", e.foc_residual},
                        {"supply_constant", e.supply_constant}};
    return j;
}

inline nlohmann::json da_solution_json(const DASolution& s) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& x : s.g)
        g.push_back({{"price", x.price},
                     {"G", x.G},
                     {"level_term", x.level_term},
                     {"slope_term", x.slope_term},
                     {"shortfall_term", x.shortfall_term},
                     {"expected_rt_price", x.expected_price},
                     {"sensitivity", x.sensitivity},
                     {"excluded", x.excluded}});
    return {{"curve", curve_json(s.curve)},
            {"iterations", s.iterations},
            {"fixed_point_residual", s.fixed_point_residual},
            {"change_history", s.history},
            {"residual_history", s.residual},
            {"damping_history", s.damping},
            {"G", g}};
}

inline CsvTable sweep_table(const std::vector<DAEquilibrium>& rows) {
    CsvTable t({"n_v", "p_f", "e_ps", "gap", "d_l", "b", "e_ps_se", "sensitivity", "virtual_load", "iterations"});
    for (const auto& e : rows)
        t.row({trader_label(e.trader_count), fmt(e.outcome.clearing_price), fmt(e.expected_rt_price), fmt(e.gap),
               fmt(e.outcome.lse_demand), fmt(e.per_trader_quantity), fmt(e.expected_rt_price_se),
               fmt(e.price_sensitivity), fmt(e.outcome.virtual_load), std::to_string(e.iterations)});
    return t;
}

inline CsvTable settlement_header() {
    return CsvTable({"scenario_id", "t", "case", "participant", "da_quantity", "da_cash", "rt_quantity", "rt_cash",
                     "penalty", "curtailed", "net"});
}

// Long format, one row per (t, participant); cash columns are net receipts of the participant.
inline void settlement_rows(CsvTable& out, const SettlementReport& r, std::size_t scenario_id, const DAOutcome& da) {
    for (std::size_t t = 0; t < r.hours.size(); ++t) {
        const auto& h = r.hours[t];
        auto row = [&](const std::string& who, double daq, double dac, double rtq, double rtc, double pen, double cur) {
            out.row({std::to_string(scenario_id), std::to_string(t), std::to_string(h.case_tag), who, fmt(daq), fmt(dac),
                     fmt(rtq), fmt(rtc), fmt(pen), fmt(cur), fmt(dac + rtc - pen)});
        };
        row("lse", da.lse_demand, -h.lse_da_payment, h.demand - da.lse_demand, -h.lse_rt_payment, 0.0, 0.0);
        for (std::size_t i = 0; i < h.supplier_da_revenue.size(); ++i)
            row("supplier_" + std::to_string(i + 1), da.supply_per_supplier, h.supplier_da_revenue[i],
                h.supplier_rt_quantity[i], h.supplier_rt_revenue[i], h.shortfall_penalty[i], h.curtailed_renewable[i]);
        row("conventional", da.conventional, h.conventional_da_revenue, h.conventional_rt_quantity,
            h.conventional_rt_revenue, 0.0, h.curtailed_conventional);
        row("traders", da.virtual_load, -h.trader_da_payment, -da.virtual_load, h.trader_rt_receipt, 0.0, 0.0);
    }
}

inline nlohmann::json settlement_json(const SettlementReport& r) {
    std::size_t case2 = 0;
    for (const auto& h : r.hours) case2 += h.case_tag == 2;
    return {{"hours", r.hours.size()},
            {"case2_hours", case2},
            {"trader_count", trader_label(r.trader_count)},
            {"lse_total_cost", r.lse_total_cost},
            {"lse_savings", r.lse_savings},
            {"all_rt_benchmark", r.all_rt_benchmark},
            {"supplier_totals", r.supplier_totals},
            {"conventional_total", r.conventional_total},
            {"trader_total", r.trader_total},
            {"max_abs_net_flow", r.max_abs_net_flow},
            {"max_abs_da_imbalance", r.max_abs_da_imbalance},
            {"max_abs_rt_imbalance", r.max_abs_rt_imbalance},
            {"max_savings_identity_error", r.max_savings_identity_error}};
}

namespace empirics {

inline CsvTable hour_table(const std::vector<HourRow>& rows) {
    CsvTable t({"hour", "pre_mean", "pre_se", "pre_count", "post_mean", "post_se", "post_count"});
    for (const auto& r : rows)
        t.row({std::to_string(r.hour), fmt(r.pre.mean), fmt(r.pre.se), std::to_string(r.pre.count), fmt(r.post.mean),
               fmt(r.post.se), std::to_string(r.post.count)});
    return t;
}

// hour, period, value: one row per (hour, period) for plotting
inline CsvTable long_table(const std::vector<HourRow>& rows, const char* value) {
    CsvTable t({"hour", "period", value, "se", "count"});
    for (const auto& r : rows) {
        t.row({std::to_string(r.hour), "pre", fmt(r.pre.mean), fmt(r.pre.se), std::to_string(r.pre.count)});
        t.row({std::to_string(r.hour), "post", fmt(r.post.mean), fmt(r.post.se), std::to_string(r.post.count)});
    }
    return t;
}

inline nlohmann::json spread_summary_json(const SpreadSummary& s) {
    return {{"pre_mean_abs_spread", s.pre_mean_abs},
            {"post_mean_abs_spread", s.post_mean_abs},
            {"change", s.change},
            {"percent_change", s.percent_change},
            {"percent_change_convention", "(|pre| - |post|) / |post|"},
            {"percent_change_pre_based", s.percent_change_pre},
            {"percent_change_pre_based_convention", "(|pre| - |post|) / |pre|"}};
}

inline nlohmann::json ratio_summary_json(const RatioTable& r) {
    return {{"pre_mean", r.summary.pre_mean},
            {"post_mean", r.summary.post_mean},
            {"pre_min", r.summary.pre_min},
            {"pre_max", r.summary.pre_max},
            {"decline_min", r.summary.decline_min},
            {"decline_max", r.summary.decline_max},
            {"zero_rt_excluded", r.zero_rt_excluded}};
}

inline nlohmann::json comparison_json(const ComparisonReport& c) {
    nlohmann::json j = {{"pre_nonpositive_hours", c.pre_nonpositive_hours},
                        {"reference_nonpositive_hours", {4, 5}},
                        {"spread_pattern_matches", c.spread_pattern_matches}};
    if (c.has_ratios) {
        j["ratio_pre_band"] = {c.ratio_pre_min, c.ratio_pre_max};
        j["reference_ratio_pre_band"] = {0.45, 0.53};
        j["ratio_band_matches"] = c.ratio_band_matches;
        j["ratio_decline_band"] = {c.ratio_decline_min, c.ratio_decline_max};
        j["reference_ratio_decline_band"] = {0.10, 0.15};
        j["ratio_decline_matches"] = c.ratio_decline_matches;
    }
    return j;
}

}  // namespace empirics

}  // namespace two_settle
