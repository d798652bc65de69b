#pragma once

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "curves.hpp"
#include "da_eq.hpp"
#include "errors.hpp"
#include "scenarios.hpp"

namespace two_settle {

using json = nlohmann::json;

struct OutputConfig {
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "json"};
};

struct RunConfig {
    TwoSettlementMarket market;
    int trader_count = 0;        // infinite_traders for the aligned path
    std::string trader_family = "flat";
    ScenarioModel scenario;
    int scenario_count = 4000;
    OutputConfig output;
    std::uint64_t seed = 7;

    void validate() const {
        market.conventional().validate();
        if (market.suppliers() < 0) throw ConfigError("market.suppliers must be >= 0");
        if (trader_count < 0 && trader_count != infinite_traders) throw ConfigError("market.traders.count must be >= 0");
        if (trader_family != "flat" && trader_family != "sloped") throw ConfigError("market.traders.family must be flat or sloped");
        if (trader_family == "flat" && market.num.trader_slope != 0.0)
            throw ConfigError("market.traders.slope must be 0 for the flat family");
        if (market.num.trader_slope < 0.0) throw ConfigError("market.traders.slope must be >= 0");
        if (scenario_count < 1) throw ConfigError("scenario.count must be >= 1");
        scenario.validate();
        const auto& n = market.num;
        if (n.grid_points < 2) throw ConfigError("numerics.grid_points must be >= 2");
        if (n.grid_max < 0.0) throw ConfigError("numerics.grid_max must be >= 0");
        if (n.g_scenarios < 0) throw ConfigError("numerics.g_scenarios must be >= 0");
        if (!(n.sensitivity_step > 0.0)) throw ConfigError("numerics.sensitivity_step must be positive");
        if (n.max_iterations < 1 || n.vt_max_iterations < 1) throw ConfigError("numerics: iteration caps must be >= 1");
        if (!(n.curve_tol > 0.0) || !(n.vt_tol > 0.0)) throw ConfigError("numerics: tolerances must be positive");
        if (!(n.curve_damping > 0.0 && n.curve_damping <= 1.0)) throw ConfigError("numerics.curve_damping must lie in (0, 1]");
        if (!(n.p_ref > 0.0)) throw ConfigError("numerics.p_ref must be positive");
        if (n.lse_grid < 3) throw ConfigError("numerics.lse_grid must be >= 3");
        if (n.surface_points < 2) throw ConfigError("numerics.surface_points must be >= 2");
        if (n.workers < 1) throw ConfigError("numerics.workers must be >= 1");
        if (market.rt.sfe.monotone_grid < 2) throw ConfigError("numerics.monotone_grid must be >= 2");
        for (const auto& f : output.formats)
            if (f != "csv" && f != "json") throw ConfigError("output.formats: unknown format '" + f + "'");
    }

    std::vector<MarketScenario> scenarios() const { return sample(scenario, scenario_count); }
};

namespace config_detail {

inline void allow(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline json marginal_json(const Marginal& m, double rho) {
    return {{"family", to_string(m.family)}, {"lo", m.lo}, {"hi", m.hi}, {"mu", m.mu},
            {"sigma", m.sigma}, {"a", m.a}, {"b", m.b}, {"rho", rho}};
}

inline void read_marginal(const json& j, const std::string& where, Marginal& m, double& rho) {
    allow(j, where, {"family", "lo", "hi", "mu", "sigma", "a", "b", "rho"});
    std::string fam = to_string(m.family);
    get(j, "family", fam, where);
    if (fam == "uniform")
        m.family = DistFamily::uniform;
    else if (fam == "truncated_normal")
        m.family = DistFamily::truncated_normal;
    else if (fam == "beta")
        m.family = DistFamily::beta;
    else
        throw ConfigError(where + ".family: unknown distribution '" + fam + "'");
    get(j, "lo", m.lo, where);
    get(j, "hi", m.hi, where);
    get(j, "mu", m.mu, where);
    get(j, "sigma", m.sigma, where);
    get(j, "a", m.a, where);
    get(j, "b", m.b, where);
    get(j, "rho", rho, where);
}

inline const char* to_string(FMethod f) {
    switch (f) {
        case FMethod::closed_form: return "closed_form";
        case FMethod::quadrature: return "quadrature";
        default: return "automatic";
    }
}

}  // namespace config_detail

inline json to_json(const RunConfig& c) {
    using namespace config_detail;
    const auto& cc = c.market.conventional();
    const auto& n = c.market.num;
    const auto& s = c.market.rt.sfe;
    json traders = {{"family", c.trader_family}, {"slope", n.trader_slope}};
    if (c.trader_count == infinite_traders)
        traders["count"] = "infinite";
    else
        traders["count"] = c.trader_count;
    return {
        {"market",
         {{"suppliers", c.market.suppliers()},
          {"conventional",
           {{"family", cc.family == CurveFamily::affine ? "affine" : "power"}, {"a", cc.a}, {"alpha", cc.alpha}, {"p_c", cc.p_c}}},
          {"traders", traders}}},
        {"scenario",
         {{"count", c.scenario_count},
          {"time_steps", c.scenario.time_steps},
          {"demand", marginal_json(c.scenario.demand, c.scenario.demand_rho)},
          {"capacity", marginal_json(c.scenario.capacity, c.scenario.capacity_rho)}}},
        {"numerics",
         {{"grid_points", n.grid_points},
          {"grid_max", n.grid_max},
          {"g_scenarios", n.g_scenarios},
          {"sensitivity_step", n.sensitivity_step},
          {"max_iterations", n.max_iterations},
          {"curve_tol", n.curve_tol},
          {"curve_damping", n.curve_damping},
          {"curve_damping_min", n.curve_damping_min},
          {"shortfall_term", n.shortfall_term},
          {"p_ref", n.p_ref},
          {"lse_grid", n.lse_grid},
          {"lse_rel_tol", n.lse_rel_tol},
          {"vt_lse_rel_tol", n.vt_lse_rel_tol},
          {"vt_tol", n.vt_tol},
          {"vt_max_iterations", n.vt_max_iterations},
          {"surface_points", n.surface_points},
          {"clear_tol", n.clear_tol},
          {"alignment_tol", n.alignment_tol},
          {"workers", n.workers},
          {"monotone_grid", s.monotone_grid},
          {"analytic_monotone", s.analytic_monotone},
          {"c1_rel_tol", s.c1_rel_tol},
          {"breakpoint_rel_tol", s.breakpoint_rel_tol},
          {"competitive_fallback", s.competitive_fallback},
          {"f_method", to_string(s.f_method)}}},
        {"output", {{"directory", c.output.directory}, {"formats", c.output.formats}}},
        {"seed", c.seed},
    };
}

inline RunConfig config_from_json(const json& j) {
    using namespace config_detail;
    RunConfig c;
    allow(j, "config", {"market", "scenario", "numerics", "output", "seed"});
    if (auto m = j.find("market"); m != j.end()) {
        allow(*m, "market", {"suppliers", "conventional", "traders"});
        get(*m, "suppliers", c.market.rt.suppliers, "market");
        if (auto cc = m->find("conventional"); cc != m->end()) {
            allow(*cc, "market.conventional", {"family", "a", "alpha", "p_c"});
            auto& cv = c.market.rt.conventional;
            std::string fam = "affine";
            get(*cc, "family", fam, "market.conventional");
            if (fam == "affine")
                cv.family = CurveFamily::affine;
            else if (fam == "power")
                cv.family = CurveFamily::power;
            else
                throw ConfigError("market.conventional.family: unknown family '" + fam + "'");
            get(*cc, "a", cv.a, "market.conventional");
            get(*cc, "alpha", cv.alpha, "market.conventional");
            get(*cc, "p_c", cv.p_c, "market.conventional");
            if (cv.family == CurveFamily::affine) cv.alpha = 1.0;
        }
        if (auto t = m->find("traders"); t != m->end()) {
            allow(*t, "market.traders", {"count", "family", "slope"});
            if (auto n = t->find("count"); n != t->end()) {
                if (n->is_string()) {
                    if (*n != "infinite") throw ConfigError("market.traders.count: expected an integer or \"infinite\"");
                    c.trader_count = infinite_traders;
                } else if (n->is_number_integer()) {
                    c.trader_count = n->get<int>();
                    if (c.trader_count < 0) throw ConfigError("market.traders.count must be >= 0");
                } else {
                    throw ConfigError("market.traders.count: expected an integer or \"infinite\"");
                }
            }
            get(*t, "family", c.trader_family, "market.traders");
            get(*t, "slope", c.market.num.trader_slope, "market.traders");
        }
    }
    if (auto s = j.find("scenario"); s != j.end()) {
        allow(*s, "scenario", {"count", "time_steps", "demand", "capacity"});
        get(*s, "count", c.scenario_count, "scenario");
        get(*s, "time_steps", c.scenario.time_steps, "scenario");
        if (auto d = s->find("demand"); d != s->end())
            read_marginal(*d, "scenario.demand", c.scenario.demand, c.scenario.demand_rho);
        if (auto q = s->find("capacity"); q != s->end())
            read_marginal(*q, "scenario.capacity", c.scenario.capacity, c.scenario.capacity_rho);
    }
    if (auto nu = j.find("numerics"); nu != j.end()) {
        allow(*nu, "numerics",
              {"grid_points", "grid_max", "g_scenarios", "sensitivity_step", "max_iterations", "curve_tol",
               "curve_damping", "curve_damping_min", "shortfall_term", "p_ref", "lse_grid", "lse_rel_tol",
               "vt_lse_rel_tol", "vt_tol", "vt_max_iterations", "surface_points", "clear_tol", "alignment_tol",
               "workers", "monotone_grid", "analytic_monotone", "c1_rel_tol", "breakpoint_rel_tol",
               "competitive_fallback", "f_method"});
        auto& n = c.market.num;
        const std::string w = "numerics";
        get(*nu, "grid_points", n.grid_points, w);
        get(*nu, "grid_max", n.grid_max, w);
        get(*nu, "g_scenarios", n.g_scenarios, w);
        get(*nu, "sensitivity_step", n.sensitivity_step, w);
        get(*nu, "max_iterations", n.max_iterations, w);
        get(*nu, "curve_tol", n.curve_tol, w);
        get(*nu, "curve_damping", n.curve_damping, w);
        get(*nu, "curve_damping_min", n.curve_damping_min, w);
        get(*nu, "shortfall_term", n.shortfall_term, w);
        get(*nu, "p_ref", n.p_ref, w);
        get(*nu, "lse_grid", n.lse_grid, w);
        get(*nu, "lse_rel_tol", n.lse_rel_tol, w);
        get(*nu, "vt_lse_rel_tol", n.vt_lse_rel_tol, w);
        get(*nu, "vt_tol", n.vt_tol, w);
        get(*nu, "vt_max_iterations", n.vt_max_iterations, w);
        get(*nu, "surface_points", n.surface_points, w);
        get(*nu, "clear_tol", n.clear_tol, w);
        get(*nu, "alignment_tol", n.alignment_tol, w);
        get(*nu, "workers", n.workers, w);
        auto& s = c.market.rt.sfe;
        get(*nu, "monotone_grid", s.monotone_grid, w);
        get(*nu, "analytic_monotone", s.analytic_monotone, w);
        get(*nu, "c1_rel_tol", s.c1_rel_tol, w);
        get(*nu, "breakpoint_rel_tol", s.breakpoint_rel_tol, w);
        get(*nu, "competitive_fallback", s.competitive_fallback, w);
        std::string fm = to_string(s.f_method);
        get(*nu, "f_method", fm, w);
        if (fm == "automatic")
            s.f_method = FMethod::automatic;
        else if (fm == "closed_form")
            s.f_method = FMethod::closed_form;
        else if (fm == "quadrature")
            s.f_method = FMethod::quadrature;
        else
            throw ConfigError("numerics.f_method: unknown method '" + fm + "'");
    }
    if (auto o = j.find("output"); o != j.end()) {
        allow(*o, "output", {"directory", "formats"});
        get(*o, "directory", c.output.directory, "output");
        get(*o, "formats", c.output.formats, "output");
    }
    get(j, "seed", c.seed, "config");
    c.scenario.suppliers = c.market.suppliers();
    c.scenario.seed = c.seed;
    c.market.demand_max = c.scenario.demand.hi;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// Renewable world used by the examples and acceptance checks.
inline RunConfig default_config() {
    RunConfig c;
    c.market.rt.conventional = ConventionalCurve::affine(1.0, 0.0);
    c.market.rt.suppliers = 3;
    c.scenario.time_steps = 24;
    c.scenario.demand = Marginal::uniform(0.0, 1.0);
    c.scenario.demand_rho = 0.5;
    c.scenario.capacity = Marginal::beta(0.0, 0.6, 2.0, 2.0);
    c.scenario.capacity_rho = 0.9;
    c.scenario_count = 4000;
    c.seed = 7;
    c.scenario.suppliers = 3;
    c.scenario.seed = 7;
    c.market.demand_max = 1.0;
    return c;
}

}  // namespace two_settle
