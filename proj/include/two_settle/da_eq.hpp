#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curves.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "rt_stage.hpp"
#include "scenarios.hpp"
#include "types.hpp"

namespace two_settle {

struct DANumerics {
    int grid_points = 24;
    double grid_max = 0.0;  // 0: C^{-1}(demand upper bound)
    int g_scenarios = 500;
    double sensitivity_step = 1e-3;
    int max_iterations = 50;
    double curve_tol = 1e-6;
    double curve_damping = 0.5;
    double curve_damping_min = 1e-9;
    bool shortfall_term = true;
    double p_ref = 1.0;  // log anchor for the two-supplier DA curve
    int lse_grid = 41;
    double lse_rel_tol = 1e-6;
    double vt_lse_rel_tol = 1e-10;
    double trader_slope = 0.0;
    double vt_tol = 1e-8;
    int vt_max_iterations = 200;
    int surface_points = 65;
    double clear_tol = 1e-10;
    double alignment_tol = 1e-10;
    int workers = 1;
};

struct TwoSettlementMarket {
    RTContext rt;
    double demand_max = 1.0;
    DANumerics num;

    int suppliers() const { return rt.suppliers; }
    const ConventionalCurve& conventional() const { return rt.conventional; }
};

// Per-supplier renewable DA curve on a price grid, linear between nodes, through (0, 0),
// extended past the last node with the last slope.
struct DACurve {
    std::vector<double> prices;
    std::vector<double> values;
    double constant = 0.0;

    static DACurve zero(std::vector<double> grid) {
        DACurve c;
        c.values.assign(grid.size(), 0.0);
        c.prices = std::move(grid);
        return c;
    }

    double operator()(double p) const {
        if (prices.empty() || p <= 0.0) return 0.0;
        auto j = std::size_t(std::upper_bound(prices.begin(), prices.end(), p) - prices.begin());
        if (j == 0) return values[0] * p / prices[0];
        if (j == prices.size()) return values.back() + slope(j - 1) * (p - prices.back());
        double w = (p - prices[j - 1]) / (prices[j] - prices[j - 1]);
        return values[j - 1] + w * (values[j] - values[j - 1]);
    }

    double derivative(double p) const {
        if (prices.empty() || p < 0.0) return 0.0;
        auto j = std::size_t(std::upper_bound(prices.begin(), prices.end(), p) - prices.begin());
        return slope(std::min(j, prices.size() - 1));
    }

    double sup_distance(const DACurve& o) const {
        double d = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) d = std::max(d, std::abs(values[j] - o(prices[j])));
        return d;
    }

private:
    // slope of segment ending at node j (node 0 uses the origin)
    double slope(std::size_t j) const {
        if (j == 0) return values[0] / prices[0];
        return (values[j] - values[j - 1]) / (prices[j] - prices[j - 1]);
    }
};

// Total DEC load sum_v B_v(p) = n_v (b - s (p - p_ref)), floored at zero.
struct VirtualLoad {
    double total = 0.0;
    double slope_total = 0.0;
    double p_ref = 0.0;

    double operator()(double p) const { return std::max(0.0, total - slope_total * (p - p_ref)); }
};

inline std::vector<double> da_price_grid(const TwoSettlementMarket& m) {
    double hi = m.num.grid_max;
    if (!(hi > 0.0)) hi = conventional_inverse(m.conventional(), m.demand_max);
    if (!(hi > 0.0)) hi = 1.0;
    std::vector<double> g;
    for (int j = 1; j <= m.num.grid_points; ++j) g.push_back(hi * j / m.num.grid_points);
    return g;
}

// Smallest p with N S(p) + C(p) - B(p) >= D_l.
inline double clear_da(const DACurve& curve, const TwoSettlementMarket& m, double d_l, const VirtualLoad& v = {}) {
    const int n = m.suppliers();
    auto net = [&](double p) { return n * curve(p) + eval_conventional(m.conventional(), p) - v(p) - d_l; };
    double f0 = net(0.0);
    if (f0 >= 0.0) return 0.0;
    double lo = 0.0, flo = f0, hi = 1.0, fhi = net(hi);
    while (fhi < 0.0) {
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        if (hi > 1e12) throw InfeasibleError("DA market: no crossing of net supply and demand", -fhi);
        fhi = net(hi);
    }
    return numerics::increasing_root(net, lo, hi, flo, fhi, m.num.clear_tol);
}

inline DAOutcome da_outcome(const DACurve& curve, const TwoSettlementMarket& m, double d_l, const VirtualLoad& v = {}) {
    DAOutcome o;
    o.clearing_price = clear_da(curve, m, d_l, v);
    o.lse_demand = d_l;
    o.supply_per_supplier = curve(o.clearing_price);
    o.conventional = eval_conventional(m.conventional(), o.clearing_price);
    o.virtual_load = v(o.clearing_price);
    o.suppliers = m.suppliers();
    return o;
}

// Flattened per-(scenario, t) RT prices at one DA price.
struct PriceField {
    double da_price = 0.0;
    std::size_t steps = 0;
    std::vector<double> price;
    std::vector<int> regime;
};

inline PriceField direct_field(double p, const DACurve& curve, const TwoSettlementMarket& m,
                               const std::vector<MarketScenario>& scenarios, std::size_t count = 0) {
    std::size_t n = count ? std::min(count, scenarios.size()) : scenarios.size();
    std::size_t T = n ? scenarios[0].steps() : 0;
    PriceField f;
    f.da_price = p;
    f.steps = T;
    f.price.resize(n * T);
    f.regime.resize(n * T);
    double s = curve(p);
    parallel_for(n, m.num.workers, [&](std::size_t k) {
        auto o = solve_rt_stage(scenarios[k], p, s, m.rt, k);
        for (std::size_t t = 0; t < T; ++t) {
            f.price[k * T + t] = o.prices[t];
            f.regime[k * T + t] = o.regime(t);
        }
    });
    return f;
}

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
};

// Scenario-clustered mean: hours within a scenario are averaged first.
inline MeanSE clustered_mean(const std::vector<double>& x, std::size_t steps) {
    if (x.empty() || steps == 0) return {};
    std::size_t n = x.size() / steps;
    std::vector<double> per(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t < steps; ++t) s += x[k * steps + t];
        per[k] = s / double(steps);
    }
    return {numerics::mean(per), numerics::standard_error(per)};
}

// Difference stencil for one sample: central when all three regimes agree, one-sided when only
// one neighbour shares the centre's regime, none otherwise.
enum class Stencil { central, backward, forward, excluded };

inline Stencil stencil_for(int lo, int mid, int hi) {
    if (mid == -2) return Stencil::excluded;
    bool l = lo == mid, h = hi == mid;
    if (l && h) return Stencil::central;
    if (l) return Stencil::backward;
    if (h) return Stencil::forward;
    return Stencil::excluded;
}

template <class F>
double stencil_difference(Stencil st, double plo, double pmid, double phi, F&& value) {
    switch (st) {
        case Stencil::central: return (value(2) - value(0)) / (phi - plo);
        case Stencil::backward: return pmid > plo ? (value(1) - value(0)) / (pmid - plo) : 0.0;
        case Stencil::forward: return (value(2) - value(1)) / (phi - pmid);
        default: return 0.0;
    }
}

inline std::vector<double> field_difference(const PriceField& lo, const PriceField& mid, const PriceField& hi) {
    std::vector<double> d(mid.price.size(), 0.0);
    for (std::size_t k = 0; k < d.size(); ++k) {
        auto st = stencil_for(lo.regime[k], mid.regime[k], hi.regime[k]);
        const PriceField* f[3] = {&lo, &mid, &hi};
        d[k] = stencil_difference(st, lo.da_price, mid.da_price, hi.da_price, [&](int i) { return f[i]->price[k]; });
    }
    return d;
}

struct SensitivityResult {
    double price = 0.0;
    MeanSE expected_price;
    MeanSE sensitivity;
    double sensitivity_demand = 0.0;  // E[(p_s)' D]
    std::size_t excluded = 0;
};

inline std::vector<double> flat_demand(const std::vector<MarketScenario>& scenarios, std::size_t count = 0) {
    std::size_t n = count ? std::min(count, scenarios.size()) : scenarios.size();
    std::vector<double> d;
    for (std::size_t k = 0; k < n; ++k) d.insert(d.end(), scenarios[k].demand.begin(), scenarios[k].demand.end());
    return d;
}

inline SensitivityResult summarize_sensitivity(const PriceField& lo, const PriceField& mid, const PriceField& hi,
                                               const std::vector<double>& demand) {
    SensitivityResult r;
    r.price = mid.da_price;
    r.expected_price = clustered_mean(mid.price, mid.steps);
    auto d = field_difference(lo, mid, hi);
    r.sensitivity = clustered_mean(d, mid.steps);
    double sd = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        sd += d[k] * demand[k];
        if (stencil_for(lo.regime[k], mid.regime[k], hi.regime[k]) == Stencil::excluded) ++r.excluded;
    }
    r.sensitivity_demand = d.empty() ? 0.0 : sd / double(d.size());
    return r;
}

inline double sensitivity_step(double p, double h) { return p > 0.0 ? std::min(h, 0.5 * p) : h; }

// E[p_s] and E[(p_s)'] at DA price p by central differences of the RT stage at p -/+ h.
inline SensitivityResult rt_price_sensitivity(const std::vector<MarketScenario>& scenarios, const DACurve& curve,
                                              const TwoSettlementMarket& m, double p, double h) {
    if (!(h > 0.0)) throw DomainError("rt_price_sensitivity: step must be positive");
    if (p - h < 0.0) throw DomainError("rt_price_sensitivity: p - h must be feasible");
    auto lo = direct_field(p - h, curve, m, scenarios);
    auto mid = direct_field(p, curve, m, scenarios);
    auto hi = direct_field(p + h, curve, m, scenarios);
    return summarize_sensitivity(lo, mid, hi, flat_demand(scenarios));
}

struct GPoint {
    double price = 0.0;
    double G = 0.0;
    double level_term = 0.0;      // E[(p_s)' sum_i S-bar_i(p_s)]
    double slope_term = 0.0;      // E[(p_s)' p_s sum_i S-bar_i'(p_s)]
    double shortfall_term = 0.0;  // E[(Q - S)(p_s)' 1{Q < S}]
    double expected_price = 0.0;
    double sensitivity = 0.0;
    std::size_t excluded = 0;
};

inline GPoint g_point(double p, const std::vector<MarketScenario>& scenarios, const DACurve& curve,
                      const TwoSettlementMarket& m) {
    const int N = m.suppliers();
    if (N < 2) throw DomainError("build_G_grid: at least two renewable suppliers required");
    std::size_t n = m.num.g_scenarios > 0 ? std::min<std::size_t>(std::size_t(m.num.g_scenarios), scenarios.size())
                                          : scenarios.size();
    double h = sensitivity_step(p, m.num.sensitivity_step);
    double pl = std::max(p - h, 0.0), ph = p + h;
    double s = curve(p), sl = curve(pl), sh = curve(ph);
    struct Acc {
        double level = 0, slope = 0, shortfall = 0, price = 0, dps = 0;
        std::size_t samples = 0, excluded = 0, supplier_samples = 0;
    };
    std::vector<Acc> acc(n);
    parallel_for(n, m.num.workers, [&](std::size_t k) {
        const auto& sc = scenarios[k];
        auto a = solve_rt_stage(sc, pl, sl, m.rt, k);
        auto o = solve_rt_stage(sc, p, s, m.rt, k);
        auto b = solve_rt_stage(sc, ph, sh, m.rt, k);
        Acc& x = acc[k];
        for (std::size_t t = 0; t < sc.steps(); ++t) {
            auto st = stencil_for(a.regime(t), o.regime(t), b.regime(t));
            if (st == Stencil::excluded) ++x.excluded;
            const RTScenarioOutcome* f[3] = {&a, &o, &b};
            double dps = stencil_difference(st, pl, p, ph, [&](int i) { return f[i]->prices[t]; });
            // (p_s)' S-bar'(p_s) as a secant of the centre curve between the shifted prices
            double dsup = 0.0;
            if (o.active[t])
                dsup = stencil_difference(st, pl, p, ph, [&](int i) { return o.supply_at(f[i]->prices[t]); });
            x.level += dps * o.strategic_supply[t];
            x.slope += o.prices[t] * dsup;
            x.price += o.prices[t];
            x.dps += dps;
            ++x.samples;
            for (const auto& q : sc.capacity) {
                if (q[t] < s) x.shortfall += (q[t] - s) * dps;
                ++x.supplier_samples;
            }
        }
    });
    Acc tot;
    for (const auto& x : acc) {
        tot.level += x.level;
        tot.slope += x.slope;
        tot.shortfall += x.shortfall;
        tot.price += x.price;
        tot.dps += x.dps;
        tot.samples += x.samples;
        tot.excluded += x.excluded;
        tot.supplier_samples += x.supplier_samples;
    }
    GPoint g;
    g.price = p;
    double ns = std::max<double>(1.0, double(tot.samples));
    g.level_term = tot.level / ns;
    g.slope_term = tot.slope / ns;
    g.shortfall_term = tot.supplier_samples ? tot.shortfall / double(tot.supplier_samples) : 0.0;
    g.expected_price = tot.price / ns;
    g.sensitivity = tot.dps / ns;
    g.excluded = tot.excluded;
    double cp = m.conventional().derivative(p);
    g.G = (-g.level_term - g.slope_term) / (N * (N - 1.0) * p) - cp / (N - 1.0);
    if (m.num.shortfall_term) g.G -= g.shortfall_term / ((N - 1.0) * p);
    return g;
}

inline std::vector<GPoint> build_G_grid(const std::vector<double>& grid, const std::vector<MarketScenario>& scenarios,
                                        const DACurve& curve, const TwoSettlementMarket& m) {
    if (grid.empty()) throw DomainError("build_G_grid: empty price grid");
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (!(grid[j] > 0.0) || (j > 0 && !(grid[j] > grid[j - 1])))
            throw DomainError("build_G_grid: grid must be positive and strictly increasing");
    if (scenarios.empty()) throw DomainError("build_G_grid: empty scenario set");
    std::vector<GPoint> out;
    for (double p : grid) out.push_back(g_point(p, scenarios, curve, m));
    return out;
}

// Integral of x^{-1/m} G(x) on the grid: G is held at G(p_1) below p_1 and integrated by the
// trapezoid rule in u = x^{1-1/m} (in ln x for m = 1, anchored at p_ref).
inline std::vector<double> g_integral(const std::vector<double>& p, const std::vector<double>& G, int m, double p_ref) {
    const std::size_t n = p.size();
    std::vector<double> I(n);
    if (m > 1) {
        double r = 1.0 - 1.0 / m;
        I[0] = G[0] * std::pow(p[0], r) / r;
        for (std::size_t j = 1; j < n; ++j)
            I[j] = I[j - 1] + 0.5 * (G[j - 1] + G[j]) * (std::pow(p[j], r) - std::pow(p[j - 1], r)) / r;
        return I;
    }
    std::vector<double> J(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) J[j] = J[j - 1] + 0.5 * (G[j - 1] + G[j]) * std::log(p[j] / p[j - 1]);
    double ref;
    if (p_ref <= p[0]) {
        ref = G[0] * std::log(p_ref / p[0]);
    } else if (p_ref >= p[n - 1]) {
        ref = J[n - 1] + G[n - 1] * std::log(p_ref / p[n - 1]);
    } else {
        auto j = std::size_t(std::upper_bound(p.begin(), p.end(), p_ref) - p.begin());
        double w = std::log(p_ref / p[j - 1]) / std::log(p[j] / p[j - 1]);
        double gr = G[j - 1] + w * (G[j] - G[j - 1]);
        ref = J[j - 1] + 0.5 * (G[j - 1] + gr) * std::log(p_ref / p[j - 1]);
    }
    for (std::size_t j = 0; j < n; ++j) I[j] = J[j] - ref;
    return I;
}

// Smallest c_s for which S(p) = p^{1/m}(c_s - I(p)) starts at 0, is nonnegative and nondecreasing over
// the grid. For m > 1 the first cell is checked exactly on the constant-G piece.
inline DACurve construct_da_curve(const std::vector<double>& p, const std::vector<double>& G, int N, double p_ref = 1.0) {
    const int m = N - 1;
    if (m < 1) throw DomainError("construct_da_curve: at least two suppliers required");
    auto I = g_integral(p, G, m, p_ref);
    const std::size_t n = p.size();
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = std::pow(p[j], 1.0 / m);
    double c = I[0];
    if (m > 1) c = std::max({c, 0.0, double(m) * m / (m - 1.0) * G[0] * std::pow(p[0], 1.0 - 1.0 / m)});
    for (std::size_t j = 0; j + 1 < n; ++j) c = std::max(c, (w[j + 1] * I[j + 1] - w[j] * I[j]) / (w[j + 1] - w[j]));
    DACurve out;
    out.prices = p;
    out.constant = c;
    out.values.resize(n);
    double prev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double v = std::max(w[j] * (c - I[j]), prev);
        out.values[j] = v;
        prev = v;
    }
    return out;
}

struct DASolution {
    DACurve curve;
    std::vector<GPoint> g;
    std::vector<double> history;   // sup-norm curve change per iteration
    std::vector<double> residual;  // sup |T(S) - S| per iteration
    std::vector<double> damping;
    int iterations = 0;
    double fixed_point_residual = 0.0;
};

// Fixed point curve -> RT stage -> G -> minimal-constant curve. The damping starts at
// curve_damping and halves whenever the fixed-point residual fails to reach a new low, which settles
// the iteration when Monte Carlo regime switches make the map discontinuous.
inline DASolution solve_da_sfe(const TwoSettlementMarket& m, const std::vector<MarketScenario>& scenarios,
                               const std::optional<DACurve>& init = std::nullopt) {
    if (m.suppliers() < 2) throw DomainError("solve_da_sfe: at least two renewable suppliers required");
    auto grid = da_price_grid(m);
    DACurve cur = DACurve::zero(grid);
    if (init) {
        for (std::size_t j = 0; j < grid.size(); ++j) cur.values[j] = (*init)(grid[j]);
        cur.constant = init->constant;
    }
    DASolution sol;
    double lambda = m.num.curve_damping;
    for (int it = 1; it <= m.num.max_iterations; ++it) {
        auto g = build_G_grid(grid, scenarios, cur, m);
        std::vector<double> gv;
        for (const auto& x : g) gv.push_back(x.G);
        auto target = construct_da_curve(grid, gv, m.suppliers(), m.num.p_ref);
        double res = target.sup_distance(cur);
        if (!sol.residual.empty() && res >= *std::min_element(sol.residual.begin(), sol.residual.end()))
            lambda = std::max(0.5 * lambda, m.num.curve_damping_min);
        DACurve next = target;
        double w = res <= m.num.curve_tol ? 1.0 : lambda;
        next.constant = cur.constant + w * (target.constant - cur.constant);
        for (std::size_t j = 0; j < grid.size(); ++j)
            next.values[j] = cur.values[j] + w * (target.values[j] - cur.values[j]);
        double change = next.sup_distance(cur);
        sol.residual.push_back(res);
        sol.history.push_back(change);
        sol.damping.push_back(w);
        sol.iterations = it;
        cur = std::move(next);
        if (change <= m.num.curve_tol) {
            sol.curve = cur;
            sol.g = std::move(g);
            sol.fixed_point_residual = res;
            return sol;
        }
    }
    throw NonConvergence("DA supply curve fixed point did not converge", sol.history);
}

// RT price field as a function of the DA price for a fixed DA curve. Interpolates per sample
// between precomputed nodes on [0, p_hi]; prices outside fall back to direct solves.
class RTResponse {
public:
    RTResponse(const TwoSettlementMarket& m, const std::vector<MarketScenario>& scenarios, DACurve curve,
               double p_hi, int points)
        : m_(m), scenarios_(scenarios), curve_(std::move(curve)), demand_(flat_demand(scenarios)) {
        if (points >= 2 && p_hi > 0.0) {
            nodes_ = numerics::linspace(0.0, p_hi, std::size_t(points));
            for (double p : nodes_) fields_.push_back(direct_field(p, curve_, m_, scenarios_));
            node_slopes();
        }
    }

    const DACurve& curve() const { return curve_; }
    const std::vector<double>& demand() const { return demand_; }
    const TwoSettlementMarket& market() const { return m_; }
    const std::vector<MarketScenario>& scenarios() const { return scenarios_; }
    double upper() const { return nodes_.empty() ? 0.0 : nodes_.back(); }
    std::size_t steps() const { return scenarios_.empty() ? 0 : scenarios_[0].steps(); }

    PriceField field(double p) const {
        if (!nodes_.empty() && p >= 0.0 && p <= nodes_.back()) {
            auto j = std::size_t(std::upper_bound(nodes_.begin(), nodes_.end(), p) - nodes_.begin());
            if (j == nodes_.size()) return fields_.back();
            const auto& a = fields_[j - 1];
            const auto& b = fields_[j];
            double w = (p - nodes_[j - 1]) / (nodes_[j] - nodes_[j - 1]);
            PriceField f;
            f.da_price = p;
            f.steps = a.steps;
            f.price.resize(a.price.size());
            f.regime.resize(a.price.size());
            for (std::size_t k = 0; k < f.price.size(); ++k) {
                f.price[k] = a.price[k] + w * (b.price[k] - a.price[k]);
                f.regime[k] = w == 0.0 || a.regime[k] == b.regime[k] ? a.regime[k] : -2;
            }
            return f;
        }
        auto it = cache_.find(p);
        if (it != cache_.end()) return it->second;
        auto f = direct_field(p, curve_, m_, scenarios_);
        if (cache_.size() < 256) cache_.emplace(p, f);
        return f;
    }

    MeanSE expected_price(double p) const {
        auto f = field(p);
        return clustered_mean(f.price, f.steps);
    }

    // Inside the surface the per-sample derivative is interpolated between node slopes, which
    // keeps E[(p_s)'] continuous in p.
    SensitivityResult sensitivity(double p) const {
        if (!nodes_.empty() && p >= 0.0 && p <= nodes_.back()) {
            auto j = std::min<std::size_t>(std::size_t(std::upper_bound(nodes_.begin(), nodes_.end(), p) - nodes_.begin()),
                                           nodes_.size() - 1);
            double w = (p - nodes_[j - 1]) / (nodes_[j] - nodes_[j - 1]);
            const auto& a = slopes_[j - 1];
            const auto& b = slopes_[j];
            std::vector<double> d(a.size());
            for (std::size_t k = 0; k < d.size(); ++k) d[k] = a[k] + w * (b[k] - a[k]);
            SensitivityResult r;
            r.price = p;
            r.expected_price = expected_price(p);
            r.sensitivity = clustered_mean(d, steps());
            double sd = 0.0;
            for (std::size_t k = 0; k < d.size(); ++k) sd += d[k] * demand_[k];
            r.sensitivity_demand = d.empty() ? 0.0 : sd / double(d.size());
            r.excluded = std::max(excluded_[j - 1], excluded_[j]);
            return r;
        }
        double h = sensitivity_step(p, m_.num.sensitivity_step);
        double lo = std::max(p - h, 0.0);
        return summarize_sensitivity(field(lo), field(p), field(p + h), demand_);
    }

    // E[(D - D_l)^+ p_s] at DA price p
    double lse_rt_cost(double p, double d_l) const {
        auto f = field(p);
        double s = 0.0;
        for (std::size_t k = 0; k < f.price.size(); ++k) s += std::max(demand_[k] - d_l, 0.0) * f.price[k];
        return f.price.empty() ? 0.0 : s / double(f.price.size());
    }

private:
    void node_slopes() {
        const int none = std::numeric_limits<int>::min();
        const std::size_t n = nodes_.size();
        for (std::size_t j = 0; j < n; ++j) {
            const PriceField& lo = fields_[j > 0 ? j - 1 : j];
            const PriceField& hi = fields_[j + 1 < n ? j + 1 : j];
            const PriceField& mid = fields_[j];
            std::vector<double> d(mid.price.size(), 0.0);
            std::size_t excl = 0;
            for (std::size_t k = 0; k < d.size(); ++k) {
                int rl = j > 0 ? lo.regime[k] : none, rh = j + 1 < n ? hi.regime[k] : none;
                auto st = stencil_for(rl, mid.regime[k], rh);
                if (st == Stencil::excluded) ++excl;
                const PriceField* f[3] = {&lo, &mid, &hi};
                d[k] = stencil_difference(st, lo.da_price, mid.da_price, hi.da_price,
                                          [&](int i) { return f[i]->price[k]; });
            }
            slopes_.push_back(std::move(d));
            excluded_.push_back(excl);
        }
    }

    TwoSettlementMarket m_;
    const std::vector<MarketScenario>& scenarios_;
    DACurve curve_;
    std::vector<double> demand_;
    std::vector<double> nodes_;
    std::vector<PriceField> fields_;
    std::vector<std::vector<double>> slopes_;
    std::vector<std::size_t> excluded_;
    mutable std::map<double, PriceField> cache_;
};

inline double response_upper_price(const DACurve& curve, const TwoSettlementMarket& m) {
    return clear_da(curve, m, m.demand_max);
}

inline RTResponse make_response(const TwoSettlementMarket& m, const std::vector<MarketScenario>& scenarios,
                                const DACurve& curve) {
    return RTResponse(m, scenarios, curve, response_upper_price(curve, m), m.num.surface_points);
}

struct LSEResult {
    double demand = 0.0;
    double cost = 0.0;
    double price = 0.0;
};

// Pi^L(D_l) = p_f(D_l) D_l + E[(D - D_l)^+ p_s]
inline double lse_cost(const RTResponse& r, double d_l, const VirtualLoad& v = {}) {
    double p = clear_da(r.curve(), r.market(), d_l, v);
    return p * d_l + r.lse_rt_cost(p, d_l);
}

inline LSEResult lse_best_response(const RTResponse& r, const VirtualLoad& v, int grid_points, double rel_tol) {
    const double hi = r.market().demand_max;
    int n = std::max(grid_points, 3);
    auto xs = numerics::linspace(0.0, hi, std::size_t(n));
    std::vector<double> cost(xs.size());
    std::size_t best = 0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        cost[j] = lse_cost(r, xs[j], v);
        if (cost[j] < cost[best]) best = j;
    }
    double a = xs[best > 0 ? best - 1 : 0], b = xs[std::min(best + 1, xs.size() - 1)];
    LSEResult out{xs[best], cost[best], 0.0};
    if (b > a) {
        auto g = numerics::golden_section([&](double x) { return lse_cost(r, x, v); }, a, b, rel_tol * std::max(hi, 1e-300));
        if (g.fx < out.cost) out = {g.x, g.fx, 0.0};
    }
    out.price = clear_da(r.curve(), r.market(), out.demand, v);
    return out;
}

inline LSEResult lse_optimal_demand_no_vt(const RTResponse& r) {
    return lse_best_response(r, {}, r.market().num.lse_grid, r.market().num.lse_rel_tol);
}

// D_l = E[(p_s)' D] / (E[(p_s)'] - 1)
inline double lse_aligned_demand(double sensitivity, double sensitivity_demand) {
    if (!(sensitivity < 1.0)) throw DomainError("lse_aligned_demand: sensitivity must be below 1");
    return sensitivity_demand / (sensitivity - 1.0);
}

inline double lse_aligned_demand(const std::vector<double>& dps, const std::vector<double>& demand) {
    if (dps.size() != demand.size() || dps.empty()) throw DomainError("lse_aligned_demand: size mismatch");
    double e = 0.0, ed = 0.0;
    for (std::size_t k = 0; k < dps.size(); ++k) {
        e += dps[k];
        ed += dps[k] * demand[k];
    }
    return lse_aligned_demand(e / double(dps.size()), ed / double(dps.size()));
}

constexpr int infinite_traders = -1;

// symmetric DEC trader FOC: b = gap (N S' + C' + (N_V - 1) s) / (1 - E[(p_s)']), DEC only
inline double trader_target(double gap, double slope_sum, double sensitivity) {
    if (!(sensitivity < 1.0)) throw DomainError("trader_target: sensitivity must be below 1");
    return std::max(0.0, gap * slope_sum / (1.0 - sensitivity));
}

struct DAEquilibrium {
    double supply_constant = 0.0;
    DACurve curve;
    DAOutcome outcome;
    double expected_rt_price = 0.0;
    double expected_rt_price_se = 0.0;
    double price_sensitivity = 0.0;
    double gap = 0.0;
    double gap_se = 0.0;
    int trader_count = 0;
    double per_trader_quantity = 0.0;
    double trader_slope = 0.0;
    int iterations = 0;
    std::vector<double> history;
    bool cap_binding = false;
    double foc_residual = 0.0;  // b_target - b at the returned b

    bool infinite() const { return trader_count == infinite_traders; }
};

inline DAEquilibrium finish_equilibrium(const RTResponse& r, const DAOutcome& o, int n_v) {
    DAEquilibrium e;
    e.supply_constant = r.curve().constant;
    e.curve = r.curve();
    e.outcome = o;
    e.trader_count = n_v;
    auto sens = r.sensitivity(o.clearing_price);
    e.expected_rt_price = sens.expected_price.mean;
    e.expected_rt_price_se = sens.expected_price.se;
    e.price_sensitivity = sens.sensitivity.mean;
    e.gap = e.expected_rt_price - o.clearing_price;
    e.gap_se = e.expected_rt_price_se;
    return e;
}

inline DAEquilibrium no_trader_equilibrium(const RTResponse& r) {
    auto l = lse_optimal_demand_no_vt(r);
    return finish_equilibrium(r, da_outcome(r.curve(), r.market(), l.demand), 0);
}

// Infinite-trader construction: impose p_f = E[p_s](p_f), then the aligned LSE bid.
inline DAEquilibrium aligned_equilibrium(const RTResponse& r) {
    const auto& m = r.market();
    auto g = [&](double p) { return r.expected_price(p).mean - p; };
    double lo = 0.0, glo = g(lo);
    double p;
    if (glo <= 0.0) {
        p = 0.0;
    } else {
        double hi = std::max(r.upper(), 1e-3), ghi = g(hi);
        while (ghi > 0.0) {
            lo = hi;
            glo = ghi;
            hi *= 2.0;
            if (hi > 1e12) throw NonConvergence("alignment: expected RT price never falls below the DA price");
            ghi = g(hi);
        }
        // g decreasing: find the root of -g
        p = numerics::increasing_root([&](double x) { return -g(x); }, lo, hi, -glo, -ghi, m.num.alignment_tol);
    }
    auto sens = r.sensitivity(p);
    double d_l = lse_aligned_demand(sens.sensitivity.mean, sens.sensitivity_demand);
    DAOutcome o;
    o.clearing_price = p;
    o.lse_demand = d_l;
    o.supply_per_supplier = r.curve()(p);
    o.conventional = eval_conventional(m.conventional(), p);
    o.suppliers = m.suppliers();
    o.virtual_load = o.suppliers * o.supply_per_supplier + o.conventional - d_l;
    auto e = finish_equilibrium(r, o, infinite_traders);
    return e;
}

// Symmetric flat-bid DEC traders. For a per-trader bid b the LSE best-responds, and the trader FOC
// gives b_target = gap (N S' + C' + (N_V - 1) s) / (1 - E[(p_s)']), capped by N_V b <= C(E[p_s]).
// The LSE best response can jump between near-equal minima, so b solves b_target(b) = b by
// bracketing and bisection rather than by iteration.
inline DAEquilibrium virtual_fixed_point(int n_v, const RTResponse& r) {
    if (n_v < 1) throw DomainError("virtual_fixed_point: N_V must be >= 1");
    const auto& m = r.market();
    const double s = m.num.trader_slope;
    auto start = lse_optimal_demand_no_vt(r);
    const double p_ref = start.price;
    struct Eval {
        double b, target, residual, demand, price;
        bool capped;
    };
    // LSE best response to the trader load n_v b, then the symmetric FOC target for b
    auto eval = [&](double b) {
        VirtualLoad v{n_v * b, n_v * s, p_ref};
        auto br = lse_best_response(r, v, m.num.lse_grid, m.num.vt_lse_rel_tol);
        double p = clear_da(r.curve(), m, br.demand, v);
        auto sens = r.sensitivity(p);
        double gap = sens.expected_price.mean - p;
        double slope = m.suppliers() * r.curve().derivative(p) + m.conventional().derivative(p) + (n_v - 1) * s;
        double target = trader_target(gap, slope, sens.sensitivity.mean);
        double cap = eval_conventional(m.conventional(), std::max(sens.expected_price.mean, 0.0)) / n_v;
        bool capped = target > cap;
        target = std::min(target, cap);
        return Eval{b, target, target - b, br.demand, p, capped};
    };
    std::vector<double> hist;
    auto lo = eval(0.0);
    hist.push_back(std::abs(lo.residual));
    auto best = lo;
    int it = 1;
    if (lo.residual > m.num.vt_tol) {
        double step = std::max(lo.target, m.num.vt_tol);
        auto hi = eval(step);
        hist.push_back(std::abs(hi.residual));
        ++it;
        while (hi.residual > 0.0) {
            if (it >= m.num.vt_max_iterations || step > m.demand_max)
                throw NonConvergence("virtual trader fixed point: no sign change of the FOC residual", hist);
            lo = hi;
            step *= 2.0;
            hi = eval(step);
            hist.push_back(std::abs(hi.residual));
            ++it;
        }
        // bisection keeps residual(lo) > 0 >= residual(hi)
        while (hi.b - lo.b > m.num.vt_tol) {
            if (it >= m.num.vt_max_iterations) throw NonConvergence("virtual trader fixed point did not converge", hist);
            auto mid = eval(0.5 * (lo.b + hi.b));
            hist.push_back(std::abs(mid.residual));
            ++it;
            if (mid.residual > 0.0)
                lo = mid;
            else
                hi = mid;
        }
        best = std::abs(lo.residual) <= std::abs(hi.residual) ? lo : hi;
    }
    VirtualLoad fin{n_v * best.b, n_v * s, p_ref};
    auto e = finish_equilibrium(r, da_outcome(r.curve(), m, best.demand, fin), n_v);
    e.per_trader_quantity = best.b;
    e.trader_slope = s;
    e.iterations = it;
    e.history = hist;
    e.cap_binding = best.capped;
    e.foc_residual = best.residual;
    return e;
}

inline DAEquilibrium solve_with_traders(int n_v, const RTResponse& r) {
    if (n_v == 0) return no_trader_equilibrium(r);
    if (n_v == infinite_traders) return aligned_equilibrium(r);
    return virtual_fixed_point(n_v, r);
}

inline std::vector<DAEquilibrium> gap_sweep(const RTResponse& r, const std::vector<int>& counts) {
    if (std::find(counts.begin(), counts.end(), 0) == counts.end())
        throw DomainError("gap_sweep: trader counts must include 0");
    std::vector<DAEquilibrium> out;
    for (int n : counts) out.push_back(solve_with_traders(n, r));
    return out;
}

struct BaselineResult {
    double q = 0.0;
    double da_price = 0.0;
    double expected_rt_price = 0.0;
    double expected_rt_price_se = 0.0;
    double gap = 0.0;
    std::string method;
};

// E[C^{-1}(D) 1{D > q}] by quadrature over the demand marginal.
inline double baseline_expected_rt_price(const ConventionalCurve& c, const Marginal& d, double q) {
    if (d.degenerate()) return d.lo > q ? c.inverse(d.lo) : 0.0;
    double a = std::max(q, d.lo);
    if (a >= d.hi) return 0.0;
    return numerics::integrate([&](double x) { return c.inverse(x) * d.pdf(x); }, a, d.hi, 1e-13).value;
}

// LSE FOC C^{-1}(q) + (C^{-1})'(q) q - E[p_s(q)] = 0 with no renewables and no traders.
template <class ExpectedPrice>
double baseline_foc_root(const ConventionalCurve& c, double hi, ExpectedPrice&& eps) {
    auto foc = [&](double q) { return c.inverse(q) + c.inverse_derivative(q) * q - eps(q); };
    if (foc(0.0) >= 0.0 || !(hi > 0.0)) return 0.0;
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
        double mid = 0.5 * (lo + hi);
        (foc(mid) >= 0.0 ? hi : lo) = mid;
    }
    return hi;
}

inline BaselineResult baseline_no_renewables(const ConventionalCurve& c, const Marginal& demand) {
    BaselineResult r;
    r.method = "semi_analytic";
    r.q = baseline_foc_root(c, demand.hi, [&](double q) { return baseline_expected_rt_price(c, demand, q); });
    r.da_price = c.inverse(r.q);
    if (r.q == 0.0 && demand.hi <= 0.0) r.da_price = 0.0;
    r.expected_rt_price = baseline_expected_rt_price(c, demand, r.q);
    r.gap = r.expected_rt_price - r.da_price;
    return r;
}

inline BaselineResult baseline_no_renewables(const ConventionalCurve& c, const std::vector<MarketScenario>& scenarios) {
    auto d = flat_demand(scenarios);
    std::size_t T = scenarios.empty() ? 0 : scenarios[0].steps();
    double hi = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
    auto prices = [&](double q) {
        std::vector<double> ps(d.size());
        for (std::size_t k = 0; k < d.size(); ++k) ps[k] = d[k] > q ? c.inverse(d[k]) : 0.0;
        return ps;
    };
    BaselineResult r;
    r.method = "monte_carlo";
    r.q = baseline_foc_root(c, hi, [&](double q) { return numerics::mean(prices(q)); });
    r.da_price = c.inverse(r.q);
    if (r.q == 0.0 && hi <= 0.0) r.da_price = 0.0;
    auto ms = clustered_mean(prices(r.q), T);
    r.expected_rt_price = ms.mean;
    r.expected_rt_price_se = ms.se;
    r.gap = r.expected_rt_price - r.da_price;
    return r;
}

// p = E[C^{-1}(D) 1{D > C(p)}]
inline double baseline_alignment_price(const ConventionalCurve& c, const Marginal& demand) {
    auto g = [&](double p) { return baseline_expected_rt_price(c, demand, c.value(p)) - p; };
    double lo = 0.0, hi = std::max(c.inverse(std::max(demand.hi, 0.0)), 1e-12);
    if (g(lo) <= 0.0) return 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace two_settle
