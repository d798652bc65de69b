#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "two_settle/two_settle.hpp"
#include "two_settle/selftest.hpp"

namespace fs = std::filesystem;
using namespace two_settle;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out;
    int workers = 0;
    std::string scenarios_csv;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, sep)) out.push_back(f);
    return out;
}

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> out;
    for (const auto& f : split(s, ',')) {
        char* end = nullptr;
        double v = std::strtod(f.c_str(), &end);
        if (f.empty() || *end != '\0') throw ConfigError(std::string(what) + ": bad number '" + f + "'");
        out.push_back(v);
    }
    return out;
}

// family:p1,p2,... with uniform:lo,hi | truncated_normal:lo,hi,mu,sigma | beta:lo,hi,a,b
Marginal parse_marginal(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("--demand: expected FAMILY:PARAMS");
    std::string fam = s.substr(0, colon);
    auto p = parse_list(s.substr(colon + 1), "--demand");
    Marginal m;
    if (fam == "uniform" && p.size() == 2)
        m = Marginal::uniform(p[0], p[1]);
    else if (fam == "truncated_normal" && p.size() == 4)
        m = Marginal::truncated_normal(p[0], p[1], p[2], p[3]);
    else if (fam == "beta" && p.size() == 4)
        m = Marginal::beta(p[0], p[1], p[2], p[3]);
    else
        throw ConfigError("--demand: unknown family or wrong parameter count in '" + s + "'");
    m.validate("--demand");
    return m;
}

RunConfig load(const Common& c) {
    RunConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
    if (!c.out.empty()) cfg.output.directory = c.out;
    if (c.workers > 0)
        cfg.market.num.workers = c.workers;
    else if (std::getenv("TWO_SETTLE_WORKERS"))
        cfg.market.num.workers = default_workers();
    return cfg;
}

std::vector<MarketScenario> scenarios_for(const RunConfig& cfg, const Common& c) {
    if (c.scenarios_csv.empty()) return cfg.scenarios();
    std::ifstream in(c.scenarios_csv);
    if (!in) throw ConfigError("cannot open " + c.scenarios_csv);
    auto sc = read_scenarios_csv(in);
    if (int(sc[0].suppliers()) != cfg.market.suppliers())
        throw ConfigError("scenario csv supplier count does not match market.suppliers");
    return sc;
}

struct Output {
    fs::path dir;
    OutputMeta meta;
    bool csv = true, json_out = true;

    Output(const RunConfig& cfg, const std::string& command, bool with_config = true) : dir(cfg.output.directory) {
        meta.command = command;
        meta.config_hash = with_config ? config_hash(cfg) : "none";
        csv = std::find(cfg.output.formats.begin(), cfg.output.formats.end(), "csv") != cfg.output.formats.end();
        json_out = std::find(cfg.output.formats.begin(), cfg.output.formats.end(), "json") != cfg.output.formats.end();
        ensure_directory(dir);
    }

    void json_file(const std::string& name, const json& body) const {
        if (json_out) write_json_file(dir / name, body, meta);
    }
    void csv_file(const std::string& name, const CsvTable& t) const {
        if (csv) write_text(dir / name, t.str(&meta));
    }
};

json config_block(const RunConfig& cfg) { return rounded(to_json(cfg)); }

void print_json(const json& j) { std::cout << rounded(j).dump(2) << "\n"; }

int cmd_solve_rt(const Common& c, const std::string& caps_s, const std::string& resid_s, int scenario_id,
                 double da_price, double da_supply) {
    auto cfg = load(c);
    ResidualState rs;
    std::string source;
    if (!caps_s.empty() || !resid_s.empty()) {
        if (caps_s.empty() || resid_s.empty()) throw ConfigError("solve-rt: --caps and --residual go together");
        rs = make_residual_state(parse_list(resid_s, "--residual"), parse_list(caps_s, "--caps"), da_price);
        source = "explicit";
    } else {
        auto sc = scenarios_for(cfg, c);
        if (scenario_id < 0 || std::size_t(scenario_id) >= sc.size()) throw ConfigError("solve-rt: --scenario out of range");
        rs = residual_state(sc[std::size_t(scenario_id)], da_outcome_at(da_price, da_supply, cfg.market.rt));
        source = "scenario " + std::to_string(scenario_id);
    }
    EffectiveRTCurve curve{cfg.market.conventional(), da_price};
    auto sfe = solve_rt_sfe(rs, curve, cfg.market.rt.sfe);
    Output out(cfg, "solve-rt");
    CsvTable t({"t", "residual_demand", "rt_price", "strategic_supply"});
    for (std::size_t k = 0; k < rs.steps(); ++k) {
        double p = clear_rt(sfe, rs, k), s = 0.0;
        for (double q : rs.sorted_caps) s += sfe.supplier(p, q);
        t.row({std::to_string(k), fmt(rs.residual_demand[k]), fmt(p), fmt(s)});
    }
    json j = {{"source", source},
              {"da_price", da_price},
              {"kind", to_string(sfe.kind)},
              {"strategic", sfe.n_strategic},
              {"caps", sfe.caps},
              {"constants", sfe.constants},
              {"breakpoints", sfe.breakpoints()},
              {"shift", sfe.shift},
              {"truncation_index", sfe.truncation_index},
              {"validated_branches", sfe.validated_branches},
              {"boundary_case", sfe.boundary_case},
              {"config", config_block(cfg)}};
    out.json_file("sfe.json", j);
    out.csv_file("rt_prices.csv", t);
    j.erase("config");
    print_json(j);
    return 0;
}

int cmd_solve_da(const Common& c) {
    auto cfg = load(c);
    auto sc = scenarios_for(cfg, c);
    auto sol = solve_da_curve(cfg.market, sc);
    auto r = make_response(cfg.market, sc, sol.curve);
    auto eq = solve_with_traders(cfg.trader_count, r);
    Output out(cfg, "solve-da");
    CsvTable curve({"price", "supply"});
    for (std::size_t j = 0; j < sol.curve.prices.size(); ++j) curve.row({fmt(sol.curve.prices[j]), fmt(sol.curve.values[j])});
    json body = {{"equilibrium", equilibrium_json(eq)}, {"da_curve", da_solution_json(sol)}, {"config", config_block(cfg)}};
    out.json_file("equilibrium.json", body);
    out.csv_file("da_curve.csv", curve);
    print_json(equilibrium_json(eq));
    return 0;
}

int cmd_simulate(const Common& c, int n, bool export_scenarios) {
    auto cfg = load(c);
    if (n < 1) throw ConfigError("simulate: --scenarios must be >= 1");
    auto sc = scenarios_for(cfg, c);
    auto sol = solve_da_curve(cfg.market, sc);
    auto r = make_response(cfg.market, sc, sol.curve);
    auto eq = solve_with_traders(cfg.trader_count, r);
    // settle fresh draws after the ones used for the equilibrium
    auto realized = sample(cfg.scenario, n, std::uint64_t(sc.size()));
    Output out(cfg, "simulate");
    std::vector<SettlementReport> reps(realized.size());
    parallel_for(realized.size(), cfg.market.num.workers,
                 [&](std::size_t k) { reps[k] = settle(eq.outcome, realized[k], cfg.market.rt, eq.trader_count); });
    auto table = settlement_header();
    json per = json::array();
    double flow = 0.0, ident = 0.0, cost = 0.0, savings = 0.0, bench = 0.0, trader = 0.0;
    for (std::size_t k = 0; k < reps.size(); ++k) {
        settlement_rows(table, reps[k], k, eq.outcome);
        per.push_back(settlement_json(reps[k]));
        flow = std::max(flow, reps[k].max_abs_net_flow);
        ident = std::max(ident, reps[k].max_savings_identity_error);
        cost += reps[k].lse_total_cost;
        savings += reps[k].lse_savings;
        bench += reps[k].all_rt_benchmark;
        trader += reps[k].trader_total;
    }
    double nn = double(reps.size());
    json summary = {{"equilibrium", equilibrium_json(eq)},
                    {"scenarios_settled", reps.size()},
                    {"mean_lse_cost", cost / nn},
                    {"mean_lse_savings", savings / nn},
                    {"mean_all_rt_benchmark", bench / nn},
                    {"mean_trader_pnl", trader / nn},
                    {"max_abs_net_flow", flow},
                    {"max_savings_identity_error", ident},
                    {"per_scenario", per},
                    {"config", config_block(cfg)}};
    out.json_file("settlement_summary.json", summary);
    out.csv_file("settlement.csv", table);
    if (export_scenarios) write_text(out.dir / "scenarios.csv", scenarios_csv(realized, &out.meta));
    print_json({{"scenarios_settled", reps.size()}, {"mean_lse_cost", cost / nn}, {"mean_lse_savings", savings / nn},
                {"max_abs_net_flow", flow}, {"directory", out.dir.string()}});
    return 0;
}

std::vector<int> parse_counts(const std::string& s) {
    std::vector<int> out;
    for (const auto& f : split(s, ',')) {
        if (f == "inf" || f == "infinite") {
            out.push_back(infinite_traders);
            continue;
        }
        char* end = nullptr;
        long v = std::strtol(f.c_str(), &end, 10);
        if (f.empty() || *end != '\0' || v < 0) throw ConfigError("--counts: bad trader count '" + f + "'");
        out.push_back(int(v));
    }
    return out;
}

int cmd_sweep(const Common& c, const std::string& counts_s) {
    auto cfg = load(c);
    auto counts = parse_counts(counts_s);
    auto sc = scenarios_for(cfg, c);
    auto sol = solve_da_curve(cfg.market, sc);
    auto r = make_response(cfg.market, sc, sol.curve);
    auto rows = gap_sweep(r, counts);
    Output out(cfg, "sweep-traders");
    json eqs = json::array();
    for (const auto& e : rows) eqs.push_back(equilibrium_json(e));
    std::vector<double> finite;
    for (const auto& e : rows)
        if (e.trader_count > 0) finite.push_back(e.gap);
    bool mono = true;
    for (std::size_t j = 1; j < finite.size(); ++j) mono = mono && finite[j] <= finite[j - 1];
    json summary = {{"rows", eqs},
                    {"finite_gaps_nonincreasing", mono},
                    {"da_curve", curve_json(sol.curve)},
                    {"da_iterations", sol.iterations},
                    {"config", config_block(cfg)}};
    out.json_file("sweep_summary.json", summary);
    auto table = sweep_table(rows);
    out.csv_file("sweep.csv", table);
    std::cout << table.str();
    return 0;
}

int cmd_baseline(const Common& c, double a, double p_c, const std::string& demand_s, int mc) {
    RunConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
    if (!c.out.empty()) cfg.output.directory = c.out;
    auto curve = ConventionalCurve::affine(a, p_c);
    curve.validate();
    auto d = demand_s.empty() ? cfg.scenario.demand : parse_marginal(demand_s);
    auto semi = baseline_no_renewables(curve, d);
    json j = {{"conventional", {{"family", "affine"}, {"a", a}, {"p_c", p_c}}},
              {"demand", demand_s.empty() ? std::string(to_string(d.family)) : demand_s},
              {"q", semi.q},
              {"p_f", semi.da_price},
              {"e_ps", semi.expected_rt_price},
              {"gap", semi.gap},
              {"method", semi.method},
              {"alignment_price", baseline_alignment_price(curve, d)}};
    if (mc > 0) {
        ScenarioModel m;
        m.time_steps = cfg.scenario.time_steps;
        m.demand = d;
        m.demand_rho = cfg.scenario.demand_rho;
        m.capacity = Marginal::uniform(0.0, 0.0);
        m.suppliers = 0;
        m.seed = cfg.seed;
        auto r = baseline_no_renewables(curve, sample(m, mc));
        j["monte_carlo"] = {{"scenarios", mc}, {"q", r.q}, {"p_f", r.da_price}, {"e_ps", r.expected_rt_price},
                            {"e_ps_se", r.expected_rt_price_se}, {"gap", r.gap}};
    }
    Output out(cfg, "baseline", false);
    out.meta.config_hash = hex64(fnv1a(j.dump()));
    out.json_file("baseline.json", j);
    print_json(j);
    return 0;
}

int cmd_empirics(const Common& c, const std::string& prices, const std::string& loads, const std::string& golive,
                 const std::string& pre, const std::string& post, bool strict, const std::vector<std::string>& colmap) {
    using namespace empirics;
    auto w = make_window(golive, pre, post);
    Schema schema;
    schema.strict = strict;
    for (const auto& m : colmap) {
        auto eq = m.find('=');
        if (eq == std::string::npos) throw ConfigError("--column: expected NAME=HEADER, got '" + m + "'");
        std::string k = m.substr(0, eq), v = m.substr(eq + 1);
        if (k == "timestamp")
            schema.timestamp = v;
        else if (k == "market")
            schema.market = v;
        else if (k == "zone")
            schema.zone = v;
        else if (k == "value")
            schema.value = v;
        else
            throw ConfigError("--column: unknown logical column '" + k + "'");
    }
    RunConfig cfg = default_config();
    cfg.output.directory = c.out.empty() ? std::string("out") : c.out;
    Output out(cfg, "empirics", false);
    out.meta.config_hash = hex64(fnv1a(prices + "|" + loads + "|" + golive + "|" + pre + "|" + post));
    auto pin = ingest_csv(prices, schema);
    auto pda = hourly_aggregate(pin.da), prt = hourly_aggregate(pin.rt);
    auto spreads = spread_table(pda, prt, w);
    out.csv_file("spreads.csv", hour_table(spreads.rows));
    out.csv_file("spreads_long.csv", long_table(spreads.rows, "spread"));
    std::vector<Reject> rejects = pin.rejects;
    std::vector<std::string> warnings = pin.warnings;
    std::size_t low = 0, gaps = 0;
    for (const auto* s : {&pda, &prt})
        for (const auto& v : *s) {
            low += v.low_coverage && !v.gap;
            gaps += v.gap;
        }
    json summary = {{"spreads", spread_summary_json(spreads.summary)},
                    {"price_rows", pin.rows},
                    {"price_records", pin.records()},
                    {"low_coverage_hours", low},
                    {"gap_hours", gaps}};
    std::optional<RatioTable> ratios;
    if (!loads.empty()) {
        auto lin = ingest_csv(loads, schema);
        ratios = demand_ratio_table(hourly_aggregate(lin.da), hourly_aggregate(lin.rt), w);
        out.csv_file("ratios.csv", hour_table(ratios->rows));
        out.csv_file("ratios_long.csv", long_table(ratios->rows, "ratio"));
        summary["ratios"] = ratio_summary_json(*ratios);
        summary["load_rows"] = lin.rows;
        rejects.insert(rejects.end(), lin.rejects.begin(), lin.rejects.end());
        warnings.insert(warnings.end(), lin.warnings.begin(), lin.warnings.end());
    }
    summary["comparison"] = comparison_json(compare_with_reference(spreads, ratios ? &*ratios : nullptr));
    summary["rejects"] = rejects.size();
    summary["warnings"] = warnings;
    summary["window"] = {{"golive", format_local(w.golive)},
                         {"pre", {format_local(w.pre.start), format_local(w.pre.end)}},
                         {"post", {format_local(w.post.start), format_local(w.post.end)}}};
    out.json_file("summary.json", summary);
    std::ofstream rj(out.dir / "rejects.csv");
    write_rejects(rejects, rj);
    for (const auto& s : warnings) std::cerr << "warning: " << s << "\n";
    print_json(summary);
    return 0;
}

int cmd_selftest(const Common& c) {
    auto cfg = load(c);
    std::printf("%-6s %-3s %-52s %8s  %s\n", "status", "id", "criterion", "seconds", "detail");
    int failed = 0;
    selftest::run_all(cfg, [&](const selftest::CriterionResult& r) {
        std::printf("%-6s %-3d %-52s %8.1f  %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                    r.detail.c_str());
        std::fflush(stdout);
        failed += !r.pass;
    });
    std::printf("%d of 10 criteria failed\n", failed);
    return failed ? 1 : 0;
}

void write_diagnostics(const std::string& dir, const NonConvergence& e) {
    try {
        ensure_directory(dir);
        json j = {{"error", "non_convergence"}, {"message", e.what()}, {"history", e.history}};
        write_json_file(fs::path(dir) / "diagnostics.json", j, OutputMeta{"none", "diagnostics"});
        std::cerr << "diagnostics written to " << (fs::path(dir) / "diagnostics.json").string() << "\n";
    } catch (const std::exception& w) {
        std::cerr << "could not write diagnostics: " << w.what() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-settle: two-settlement electricity market equilibria, settlement and spread analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(version));
    Common common;
    auto add_common = [&](CLI::App* s, bool scenarios = true) {
        s->add_option("--config", common.config, "JSON run config (defaults built in)")->check(CLI::ExistingFile);
        s->add_option("--out", common.out, "output directory (overrides output.directory)");
        s->add_option("--workers", common.workers, "scenario-level worker threads (env TWO_SETTLE_WORKERS)")
            ->check(CLI::PositiveNumber);
        if (scenarios)
            s->add_option("--scenarios-csv", common.scenarios_csv, "use scenarios from a CSV file instead of sampling")
                ->check(CLI::ExistingFile);
    };

    auto* rt = app.add_subcommand("solve-rt", "RT supply function equilibrium for one state");
    add_common(rt);
    std::string caps, resid;
    int scenario_id = 0;
    double da_price = 0.0, da_supply = 0.0;
    rt->add_option("--caps", caps, "residual caps q1,q2,...");
    rt->add_option("--residual", resid, "residual demand path d1,d2,...");
    rt->add_option("--scenario", scenario_id, "scenario index when caps are not given");
    rt->add_option("--da-price", da_price, "DA clearing price")->check(CLI::NonNegativeNumber);
    rt->add_option("--da-supply", da_supply, "per-supplier DA quantity (scenario mode)")->check(CLI::NonNegativeNumber);

    auto* da = app.add_subcommand("solve-da", "DA equilibrium for the configured trader count");
    add_common(da);

    auto* sim = app.add_subcommand("simulate", "solve the equilibrium and settle sampled scenarios");
    add_common(sim);
    int n_settle = 100;
    bool export_sc = false;
    sim->add_option("--scenarios", n_settle, "number of scenarios to settle");
    sim->add_flag("--export-scenarios", export_sc, "write the settled scenarios as CSV");

    auto* sw = app.add_subcommand("sweep-traders", "gap sweep over trader counts");
    add_common(sw);
    std::string counts = "0,2,4,8,16,32,64,inf";
    sw->add_option("--counts", counts, "comma-separated trader counts, must include 0; 'inf' for the aligned path");

    auto* bl = app.add_subcommand("baseline", "no-renewables baseline with affine C");
    add_common(bl, false);
    double a = 1.0, p_c = 0.0;
    std::string demand;
    int mc = 0;
    bl->add_option("--a", a, "conventional slope");
    bl->add_option("--pc", p_c, "conventional threshold price");
    bl->add_option("--demand", demand, "demand law, e.g. uniform:0,1");
    bl->add_option("--mc", mc, "also run the Monte Carlo path with this many scenarios");

    auto* em = app.add_subcommand("empirics", "spread and demand-ratio tables from ISO extracts");
    std::string prices, loads, golive, pre, post;
    bool strict = false;
    std::vector<std::string> colmap;
    em->add_option("--out", common.out, "output directory");
    em->add_option("--prices", prices, "price CSV (timestamp,market,zone,value)")->required()->check(CLI::ExistingFile);
    em->add_option("--loads", loads, "load CSV, same schema")->check(CLI::ExistingFile);
    em->add_option("--golive", golive, "virtual trading go-live, YYYY-MM-DD")->required();
    em->add_option("--pre", pre, "pre period START:END")->required();
    em->add_option("--post", post, "post period START:END")->required();
    em->add_flag("--strict", strict, "more than 1% rejected rows is an error");
    em->add_option("--column", colmap, "column mapping NAME=HEADER, e.g. value=lmp");

    auto* st = app.add_subcommand("selftest", "run the acceptance checks and print a table");
    add_common(st, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    std::string diag_dir = common.out.empty() ? std::string("out") : common.out;
    try {
        if (rt->parsed()) return cmd_solve_rt(common, caps, resid, scenario_id, da_price, da_supply);
        if (da->parsed()) return cmd_solve_da(common);
        if (sim->parsed()) return cmd_simulate(common, n_settle, export_sc);
        if (sw->parsed()) return cmd_sweep(common, counts);
        if (bl->parsed()) return cmd_baseline(common, a, p_c, demand, mc);
        if (em->parsed()) return cmd_empirics(common, prices, loads, golive, pre, post, strict, colmap);
        if (st->parsed()) return cmd_selftest(common);
    } catch (const NonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!common.config.empty() && common.out.empty()) {
            try {
                diag_dir = load_config(common.config).output.directory;
            } catch (...) {
            }
        }
        write_diagnostics(diag_dir, e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
