#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "curves.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "types.hpp"

namespace two_settle {

struct ResidualState {
    std::vector<double> residual_demand;  // D_r(t)
    std::vector<double> caps;             // Q_i^r by supplier index
    std::vector<double> effective_caps;   // tie-perturbed, 0 for nonstrategic suppliers
    std::vector<double> sorted_caps;      // strategic caps, strictly ascending
    std::vector<int> strategic;           // supplier index behind each sorted cap
    int nonstrategic_count = 0;
    double min_residual = 0.0;
    double max_residual = 0.0;
    double da_price = 0.0;
    double da_conventional = 0.0;
    double da_supply = 0.0;

    bool rt_active() const { return max_residual > 0.0; }
    int strategic_count() const { return int(sorted_caps.size()); }
    std::size_t steps() const { return residual_demand.size(); }
};

// Fills the derived fields from residual_demand and caps.
inline void finalize_residual_state(ResidualState& rs) {
    const int n = int(rs.caps.size());
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
        if (rs.caps[i] < 0.0) throw DomainError("residual cap must be nonnegative");
        if (rs.caps[i] > 0.0) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return rs.caps[a] < rs.caps[b]; });
    rs.effective_caps.assign(n, 0.0);
    rs.sorted_caps.clear();
    rs.strategic = idx;
    int rank = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        rank = (j > 0 && rs.caps[idx[j]] == rs.caps[idx[j - 1]]) ? rank + 1 : 0;
        double q = rs.caps[idx[j]] + 1e-12 * rank;
        rs.sorted_caps.push_back(q);
        rs.effective_caps[idx[j]] = q;
    }
    rs.nonstrategic_count = n - int(idx.size());
    if (rs.residual_demand.empty()) {
        rs.min_residual = rs.max_residual = 0.0;
    } else {
        auto [lo, hi] = std::minmax_element(rs.residual_demand.begin(), rs.residual_demand.end());
        rs.min_residual = *lo;
        rs.max_residual = *hi;
    }
}

inline ResidualState make_residual_state(std::vector<double> residual_demand, std::vector<double> caps,
                                         double da_price = 0.0, double da_conventional = 0.0,
                                         double da_supply = 0.0) {
    ResidualState rs;
    rs.residual_demand = std::move(residual_demand);
    rs.caps = std::move(caps);
    rs.da_price = da_price;
    rs.da_conventional = da_conventional;
    rs.da_supply = da_supply;
    finalize_residual_state(rs);
    return rs;
}

inline ResidualState residual_state(const MarketScenario& sc, const DAOutcome& da) {
    const std::size_t T = sc.steps(), n = sc.suppliers();
    const double s = da.supply_per_supplier;
    std::vector<double> dr(T), caps(n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double delivered = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (sc.capacity[i].size() != T) throw DomainError("capacity path length mismatch");
            delivered += std::min(s, sc.capacity[i][t]);
        }
        dr[t] = sc.demand[t] - delivered - da.conventional;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double m = numerics::inf;
        for (double q : sc.capacity[i]) m = std::min(m, std::max(q - s, 0.0));
        caps[i] = T ? m : 0.0;
    }
    return make_residual_state(std::move(dr), std::move(caps), da.clearing_price, da.conventional, s);
}

enum class SFEKind { equilibrium, competitive, no_market };
enum class InvalidReason { none, non_monotone, not_attained };

inline const char* to_string(SFEKind k) {
    switch (k) {
        case SFEKind::equilibrium: return "equilibrium";
        case SFEKind::competitive: return "competitive";
        default: return "no_market";
    }
}

inline const char* to_string(InvalidReason r) {
    switch (r) {
        case InvalidReason::non_monotone: return "non_monotone";
        case InvalidReason::not_attained: return "not_attained";
        default: return "none";
    }
}

struct Invalidity {
    int branch = 0;
    InvalidReason reason = InvalidReason::none;
};

struct SFEOptions {
    int monotone_grid = 200;
    bool analytic_monotone = true;
    double c1_rel_tol = 1e-8;
    double breakpoint_rel_tol = 1e-10;
    bool competitive_fallback = true;
    FMethod f_method = FMethod::automatic;
};

// Symmetric RT supply curve S-bar, stitched from branches k = 1..K; each supplier bids
// min{S-bar(p), Q_i^r}. Prices below the shift gamma_0 map to zero.
class StitchedSFE {
public:
    SFEKind kind = SFEKind::no_market;
    EffectiveRTCurve curve;
    int n_strategic = 0;
    int truncation_index = 0;     // M_S
    int validated_branches = 0;   // branches whose attainment and monotonicity were checked
    bool boundary_case = false;   // D-bar_r sits on a cumulative cap sum
    std::vector<double> caps;     // q_1 < ... < q_n
    std::vector<double> constants;
    std::vector<double> knots;    // gamma_1..gamma_K before the shift
    std::vector<double> chi;      // per-branch turning price, debug only
    double shift = 0.0;

    // continuation past gamma_K: next branch (m >= 1) or monopolist p C-bar'(p) (m = 0)
    int tail_m = 0;
    double tail_c = 0.0;
    double tail_turn = numerics::inf;
    double tail_floor = 0.0;

    std::vector<BranchKernel> kernels;
    std::optional<BranchKernel> tail_kernel;

    int branches() const { return int(constants.size()); }

    double base(double x) const {
        if (x <= 0.0) return 0.0;
        auto it = std::lower_bound(knots.begin(), knots.end(), x);
        if (it != knots.end()) {
            auto j = std::size_t(it - knots.begin());
            return kernels[j].sigma(x, constants[j]);
        }
        return tail(x);
    }

    double base_derivative(double x) const {
        if (x <= 0.0) return 0.0;
        auto it = std::lower_bound(knots.begin(), knots.end(), x);
        if (it != knots.end()) {
            auto j = std::size_t(it - knots.begin());
            return kernels[j].dsigma(x, constants[j]);
        }
        if (tail_kernel) {
            if (x >= tail_turn) return 0.0;
            double v = tail_kernel->sigma(x, tail_c);
            return v > tail_floor ? tail_kernel->dsigma(x, tail_c) : 0.0;
        }
        double g = monopolist(x);
        if (g <= tail_floor) return 0.0;
        return curve.derivative(x) + x * second_derivative(x);
    }

    double aggregate(double p) const {
        if (kind == SFEKind::competitive) return numerics::inf;
        if (kind == SFEKind::no_market) return 0.0;
        return base(std::max(p - shift, 0.0));
    }

    double derivative(double p) const {
        if (kind != SFEKind::equilibrium || p <= shift) return 0.0;
        return base_derivative(p - shift);
    }

    double supplier(double p, double cap) const {
        if (cap <= 0.0) return 0.0;
        if (kind == SFEKind::competitive) return cap;
        return std::min(aggregate(p), cap);
    }

    double supplier_derivative(double p, double cap) const {
        if (cap <= 0.0 || kind != SFEKind::equilibrium) return 0.0;
        return aggregate(p) < cap ? derivative(p) : 0.0;
    }

    // gamma_0 < gamma_1 < ... in price space
    std::vector<double> breakpoints() const {
        std::vector<double> b{shift};
        for (double g : knots) b.push_back(shift + g);
        return b;
    }

    // total strategic RT supply plus conventional increment at price p
    double total_supply(double p) const {
        double s = curve.increment(p);
        if (kind == SFEKind::no_market) return s;
        if (kind == SFEKind::competitive) {
            for (double q : caps) s += q;
            return s;
        }
        double v = aggregate(p);
        for (double q : caps) s += std::min(v, q);
        return s;
    }

private:
    double tail(double x) const {
        if (tail_kernel) {
            double y = std::min(x, tail_turn);
            return std::max(tail_floor, tail_kernel->sigma(y, tail_c));
        }
        return std::max(tail_floor, monopolist(x));
    }

    double monopolist(double x) const { return x * curve.derivative(x); }

    double second_derivative(double x) const {
        const auto& b = curve.base;
        if (b.family == CurveFamily::affine || x <= curve.active_from()) return 0.0;
        double y = x - b.p_c;
        return b.a * b.alpha * (b.alpha - 1.0) * std::pow(y, b.alpha - 2.0);
    }
};

// Prepared solve context: caps, truncation, kernels.
struct SFEProblem {
    EffectiveRTCurve curve;
    std::vector<double> caps;
    int n = 0;
    int M_S = 0;
    int K = 0;
    bool boundary_case = false;
    double shift = 0.0;
    std::vector<BranchKernel> kernels;
    SFEOptions opt;
};

inline SFEProblem prepare_sfe(const ResidualState& rs, const EffectiveRTCurve& curve, const SFEOptions& opt) {
    SFEProblem pb;
    pb.curve = curve;
    pb.caps = rs.sorted_caps;
    pb.n = int(pb.caps.size());
    pb.opt = opt;
    if (pb.n < 2) throw NoCompetition("fewer than two strategic suppliers in the RT market");
    double cum = 0.0;
    int M = pb.n + 1;
    for (int i = 0; i < pb.n; ++i) {
        double next = cum + pb.caps[i];
        if (rs.max_residual < next) {
            M = i + 1;
            break;
        }
        cum = next;
    }
    double scale = std::max(1.0, std::abs(rs.max_residual));
    double sum = 0.0;
    for (int i = 0; i < pb.n; ++i) {
        sum += pb.caps[i];
        if (std::abs(sum - rs.max_residual) <= 1e-12 * scale) pb.boundary_case = true;
    }
    pb.M_S = M;
    pb.K = std::max(1, std::min(M, pb.n) - 1);
    pb.shift = rs.min_residual > 0.0 ? curve.increment_inverse(rs.min_residual) : 0.0;
    for (int k = 1; k <= pb.K; ++k) pb.kernels.emplace_back(curve, pb.n - k, opt.f_method);
    return pb;
}

struct StitchTrace {
    bool valid = false;
    Invalidity why;
    std::vector<double> constants;
    std::vector<double> knots;
};

inline StitchTrace stitch_trace(const SFEProblem& pb, double c1) {
    StitchTrace tr;
    double c = c1, lo = 0.0;
    for (int j = 0; j < pb.K; ++j) {
        const auto& ker = pb.kernels[j];
        if (j > 0) c = ker.const_through(lo, pb.caps[j - 1]);
        bool down = false;
        auto g = find_breakpoint(ker, c, pb.caps[j], lo, pb.opt.breakpoint_rel_tol, &down);
        if (!g) {
            tr.why = {j + 1, down ? InvalidReason::non_monotone : InvalidReason::not_attained};
            return tr;
        }
        if (*g <= lo || !branch_monotone(ker, c, lo, *g, pb.opt.monotone_grid, pb.opt.analytic_monotone)) {
            tr.why = {j + 1, InvalidReason::non_monotone};
            return tr;
        }
        tr.constants.push_back(c);
        tr.knots.push_back(*g);
        lo = *g;
    }
    tr.valid = true;
    return tr;
}

// first p > lo where sigma starts to decrease, or inf
inline double turning_price(const BranchKernel& ker, double c, double lo) {
    double p = std::max(lo, 1e-12);
    if (ker.dsigma(p * (1.0 + 1e-12), c) < 0.0) return p;
    double prev = p;
    for (int it = 0; it < 200; ++it) {
        double next = p * 2.0;
        if (ker.dsigma(next, c) < 0.0) {
            return numerics::bisect_first_true([&](double x) { return ker.dsigma(x, c) < 0.0; }, prev, next,
                                               1e-12);
        }
        prev = next;
        p = next;
        if (p > 1e12) break;
    }
    return numerics::inf;
}

inline StitchedSFE assemble_sfe(const SFEProblem& pb, const StitchTrace& tr) {
    StitchedSFE s;
    s.kind = SFEKind::equilibrium;
    s.curve = pb.curve;
    s.n_strategic = pb.n;
    s.truncation_index = pb.M_S;
    s.validated_branches = int(tr.constants.size());
    s.boundary_case = pb.boundary_case;
    s.caps = pb.caps;
    s.constants = tr.constants;
    s.knots = tr.knots;
    s.shift = pb.shift;
    s.kernels.assign(pb.kernels.begin(), pb.kernels.begin() + long(tr.constants.size()));
    double lo = 0.0;
    for (std::size_t j = 0; j < tr.constants.size(); ++j) {
        s.chi.push_back(turning_price(s.kernels[j], tr.constants[j], lo));
        lo = tr.knots[j];
    }
    int K = int(tr.constants.size());
    s.tail_m = pb.n - (K + 1);
    s.tail_floor = K > 0 ? pb.caps[K - 1] : 0.0;
    if (s.tail_m >= 1) {
        s.tail_kernel.emplace(pb.curve, s.tail_m, pb.opt.f_method);
        double g = K > 0 ? tr.knots.back() : 0.0;
        s.tail_c = K > 0 ? s.tail_kernel->const_through(g, s.tail_floor) : 0.0;
        s.tail_turn = turning_price(*s.tail_kernel, s.tail_c, g);
    }
    return s;
}

struct StitchOutcome {
    std::optional<StitchedSFE> sfe;
    Invalidity invalid;
    bool valid() const { return sfe.has_value(); }
};

inline StitchOutcome stitch_candidate(double c1, const ResidualState& rs, const EffectiveRTCurve& curve,
                                      const SFEOptions& opt = {}) {
    auto pb = prepare_sfe(rs, curve, opt);
    auto tr = stitch_trace(pb, c1);
    if (!tr.valid) return {std::nullopt, tr.why};
    return {assemble_sfe(pb, tr), {}};
}

// Lower seed for c-bar_1: smallest constant that lets branch 1 alone reach q_1 while
// increasing. Exact for the affine family; the power family starts from 0.
inline double c1_seed(const SFEProblem& pb) {
    const auto& ker = pb.kernels[0];
    const auto& b = pb.curve.base;
    if (b.family != CurveFamily::affine) return 0.0;
    double q1 = pb.caps[0], p0 = pb.curve.active_from();
    if (p0 > 0.0 && q1 <= b.a * p0) return q1 * std::pow(p0, -1.0 / ker.m());
    double p1 = q1 / b.a;
    return ker.phi(p1);
}

inline double minimal_c1(const SFEProblem& pb) {
    auto valid = [&](double c) { return stitch_trace(pb, c).valid; };
    double seed = c1_seed(pb);
    double delta = 1e-3 * std::max(std::abs(seed), 1.0);
    double lo, hi;
    if (valid(seed)) {
        hi = seed;
        lo = seed - delta;
        int it = 0;
        while (valid(lo)) {
            hi = lo;
            delta *= 2.0;
            lo = seed - delta;
            if (++it > 200) throw NonConvergence("minimal c1: no invalid constant below the seed");
        }
    } else {
        lo = seed;
        hi = seed + delta;
        int it = 0;
        while (!valid(hi)) {
            lo = hi;
            delta *= 2.0;
            hi = seed + delta;
            if (++it > 200) throw NonConvergence("minimal c1: no valid constant above the seed");
        }
    }
    for (int it = 0; it < 200; ++it) {
        if (hi - lo <= pb.opt.c1_rel_tol * std::max(std::abs(hi), 1e-12)) break;
        double mid = 0.5 * (lo + hi);
        if (valid(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

inline StitchedSFE competitive_sfe(const ResidualState& rs, const EffectiveRTCurve& curve) {
    StitchedSFE s;
    s.kind = SFEKind::competitive;
    s.curve = curve;
    s.caps = rs.sorted_caps;
    s.n_strategic = rs.strategic_count();
    return s;
}

inline StitchedSFE solve_rt_sfe(const ResidualState& rs, const EffectiveRTCurve& curve, const SFEOptions& opt = {}) {
    if (!rs.rt_active()) {
        StitchedSFE s;
        s.kind = SFEKind::no_market;
        s.curve = curve;
        s.caps = rs.sorted_caps;
        s.n_strategic = rs.strategic_count();
        return s;
    }
    if (rs.strategic_count() < 2) {
        if (!opt.competitive_fallback) throw NoCompetition("fewer than two strategic suppliers in the RT market");
        return competitive_sfe(rs, curve);
    }
    auto pb = prepare_sfe(rs, curve, opt);
    double c1 = minimal_c1(pb);
    auto tr = stitch_trace(pb, c1);
    if (!tr.valid) throw NonConvergence("minimal c1 search ended on an invalid constant");
    return assemble_sfe(pb, tr);
}

// Branch 1 with constant c used on its own, flattened past its turning point.
inline StitchedSFE unstitched_sfe(const ResidualState& rs, const EffectiveRTCurve& curve, double c,
                                  const SFEOptions& opt = {}) {
    auto pb = prepare_sfe(rs, curve, opt);
    StitchedSFE s;
    s.kind = SFEKind::equilibrium;
    s.curve = curve;
    s.n_strategic = pb.n;
    s.truncation_index = pb.M_S;
    s.caps = pb.caps;
    s.shift = pb.shift;
    s.tail_m = pb.n - 1;
    s.tail_kernel.emplace(curve, s.tail_m, opt.f_method);
    s.tail_c = c;
    s.tail_turn = turning_price(*s.tail_kernel, c, 0.0);
    return s;
}

// Smallest p >= 0 with supply(p) >= demand; supply must be nondecreasing.
template <class Supply>
double clear_market(Supply&& supply, double demand, double hint = 1.0, double rel_tol = 1e-10) {
    if (demand <= 0.0) return 0.0;
    double f0 = supply(0.0) - demand;
    if (f0 >= 0.0) return 0.0;
    double lo = 0.0, flo = f0, hi = hint > 0.0 ? hint : 1.0, fhi = supply(hi) - demand;
    int it = 0;
    while (fhi < 0.0) {
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        fhi = supply(hi) - demand;
        if (++it > 200 || !std::isfinite(hi)) throw InfeasibleError("residual demand exceeds attainable supply", -fhi);
    }
    return numerics::increasing_root([&](double p) { return supply(p) - demand; }, lo, hi, flo, fhi, rel_tol);
}

inline double clear_rt(const StitchedSFE& sfe, const ResidualState& rs, std::size_t t) {
    if (t >= rs.steps()) throw DomainError("clear_rt: time index out of range");
    double d = rs.residual_demand[t];
    if (d <= 0.0) return 0.0;
    if (sfe.kind == SFEKind::competitive) {
        double caps = std::accumulate(sfe.caps.begin(), sfe.caps.end(), 0.0);
        if (caps >= d) return 0.0;
        return sfe.curve.increment_inverse(d - caps);
    }
    double hint = std::max({1.0, sfe.curve.da_price * 2.0, sfe.shift * 2.0});
    return clear_market([&](double p) { return sfe.total_supply(p); }, d, hint);
}

inline std::vector<double> clear_rt_all(const StitchedSFE& sfe, const ResidualState& rs) {
    std::vector<double> out(rs.steps());
    for (std::size_t t = 0; t < rs.steps(); ++t) out[t] = clear_rt(sfe, rs, t);
    return out;
}

inline double rt_payoff(int i, const StitchedSFE& sfe, const ResidualState& rs, std::size_t t) {
    if (i < 0 || std::size_t(i) >= rs.effective_caps.size()) throw DomainError("rt_payoff: bad supplier index");
    double p = clear_rt(sfe, rs, t);
    return sfe.supplier(p, rs.effective_caps[i]) * p;
}

struct BestResponseReport {
    double max_improvement = 0.0;
    double max_relative = 0.0;
    int worst_t = -1;
};

// Brute-force ex-post deviation: supplier i offers a fixed quantity x in [0, Q_i^r]
// against the others' curves, for each t.
inline BestResponseReport best_response_check(const StitchedSFE& sfe, const ResidualState& rs, int i,
                                              int grid_size = 401) {
    BestResponseReport rep;
    if (i < 0 || std::size_t(i) >= rs.effective_caps.size()) throw DomainError("best_response_check: bad index");
    const double qi = rs.effective_caps[i];
    if (qi <= 0.0 || sfe.kind == SFEKind::no_market) return rep;
    int self = -1;
    for (std::size_t j = 0; j < sfe.caps.size(); ++j)
        if (sfe.caps[j] == qi) self = int(j);
    for (std::size_t t = 0; t < rs.steps(); ++t) {
        double d = rs.residual_demand[t];
        if (d <= 0.0) continue;
        double p_eq = clear_rt(sfe, rs, t);
        double pay = sfe.supplier(p_eq, qi) * p_eq;
        auto others = [&](double p) {
            double s = sfe.curve.increment(p);
            if (sfe.kind == SFEKind::competitive) {
                for (std::size_t j = 0; j < sfe.caps.size(); ++j)
                    if (int(j) != self) s += sfe.caps[j];
                return s;
            }
            double v = sfe.aggregate(p);
            for (std::size_t j = 0; j < sfe.caps.size(); ++j)
                if (int(j) != self) s += std::min(v, sfe.caps[j]);
            return s;
        };
        double best = 0.0;
        double hint = std::max(1.0, 2.0 * p_eq);
        for (int g = 0; g < grid_size; ++g) {
            double x = grid_size > 1 ? qi * double(g) / double(grid_size - 1) : qi;
            double p = clear_market(others, d - x, hint);
            best = std::max(best, x * p);
        }
        double imp = best - pay;
        if (imp > rep.max_improvement) {
            rep.max_improvement = imp;
            rep.worst_t = int(t);
        }
        if (imp > 0.0) rep.max_relative = std::max(rep.max_relative, pay > 0.0 ? imp / pay : numerics::inf);
    }
    return rep;
}

}  // namespace two_settle
