#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "errors.hpp"
#include "numerics.hpp"

namespace two_settle {

enum class CurveFamily { affine, power };

inline const char* to_string(CurveFamily f) { return f == CurveFamily::affine ? "affine" : "power"; }

// Conventional supply C(p): zero up to the threshold p_c, then a(p - p_c) (affine)
// or a(p - p_c)^alpha (power, alpha in (0, 1]).
struct ConventionalCurve {
    CurveFamily family = CurveFamily::affine;
    double a = 1.0;
    double alpha = 1.0;
    double p_c = 0.0;

    static ConventionalCurve affine(double a, double p_c = 0.0) {
        return {CurveFamily::affine, a, 1.0, p_c};
    }
    static ConventionalCurve power(double a, double alpha, double p_c = 0.0) {
        return {CurveFamily::power, a, alpha, p_c};
    }

    void validate() const {
        if (!(a > 0.0)) throw ConfigError("conventional.a must be positive");
        if (!(p_c >= 0.0)) throw ConfigError("conventional.p_c must be nonnegative");
        if (family == CurveFamily::power && !(alpha > 0.0 && alpha <= 1.0))
            throw ConfigError("conventional.alpha must lie in (0, 1]");
    }

    double exponent() const { return family == CurveFamily::affine ? 1.0 : alpha; }

    double value(double p) const {
        if (p <= p_c) return 0.0;
        double x = p - p_c;
        return family == CurveFamily::affine ? a * x : a * std::pow(x, alpha);
    }

    // Right derivative; zero on [0, p_c].
    double derivative(double p) const {
        if (p <= p_c) return 0.0;
        if (family == CurveFamily::affine) return a;
        return a * alpha * std::pow(p - p_c, alpha - 1.0);
    }

    double inverse(double q) const {
        if (q <= 0.0) return p_c;
        if (family == CurveFamily::affine) return p_c + q / a;
        return p_c + std::pow(q / a, 1.0 / alpha);
    }

    // d C^{-1}/dq
    double inverse_derivative(double q) const {
        if (family == CurveFamily::affine) return 1.0 / a;
        if (q <= 0.0) return alpha < 1.0 ? 0.0 : 1.0 / a;
        return std::pow(q / a, 1.0 / alpha - 1.0) / (a * alpha);
    }
};

inline double eval_conventional(const ConventionalCurve& c, double p) {
    if (p < 0.0) throw DomainError("eval_conventional: negative price");
    return c.value(p);
}

inline double conventional_inverse(const ConventionalCurve& c, double q) {
    if (q < 0.0) throw DomainError("conventional_inverse: negative quantity");
    return c.inverse(q);
}

// C-bar(p) = max{C(p), C(p_f)}: the conventional unit cannot be curtailed below its
// day-ahead dispatch once residual demand is positive.
struct EffectiveRTCurve {
    ConventionalCurve base;
    double da_price = 0.0;

    double floor() const { return base.value(da_price); }
    double value(double p) const { return std::max(base.value(p), floor()); }
    double increment(double p) const { return std::max(base.value(p) - floor(), 0.0); }
    // lower end of the region where C-bar' > 0
    double active_from() const { return std::max(da_price, base.p_c); }
    double derivative(double p) const { return p > active_from() ? base.derivative(p) : 0.0; }
    // smallest p with C-bar(p) - C(p_f) >= q
    double increment_inverse(double q) const {
        if (q <= 0.0) return 0.0;
        return base.inverse(floor() + q);
    }
};

enum class FMethod { automatic, closed_form, quadrature };

struct QuadratureOptions {
    double abs_tol = 1e-10;
    std::size_t max_subdivisions = 10000;
};

// F_k and sigma_k for one branch exponent m = (strategic count) - k.
class BranchKernel {
public:
    BranchKernel(const EffectiveRTCurve& curve, int m, FMethod method = FMethod::automatic,
                 QuadratureOptions q = {})
        : curve_(curve), m_(m), method_(method), quad_(q) {
        if (m < 1) throw DomainError("branch exponent degenerate: k must be below the supplier count");
        inv_m_ = 1.0 / double(m);
        p0_ = curve.active_from();
        const auto& b = curve.base;
        closed_ = b.family == CurveFamily::affine || p0_ == 0.0;
        if (method_ == FMethod::closed_form && !closed_)
            throw DomainError("no closed-form antiderivative for this curve");
        if (method_ == FMethod::quadrature) closed_ = false;
        // anchor used by the quadrature path when the integral from p0 diverges
        double e = b.exponent() - inv_m_;
        diverges_at_zero_ = p0_ == 0.0 && (m_ == 1 || e <= 0.0);
        if (p0_ == 0.0 && std::abs(e) > 1e-15) power_anchor_ = b.a * b.exponent() / e;
    }

    int m() const { return m_; }
    const EffectiveRTCurve& curve() const { return curve_; }

    double F(double p) const {
        if (!(p > 0.0)) throw DomainError("antiderivative requires p > 0");
        if (p <= p0_ && p0_ > 0.0) return 0.0;
        return closed_ ? F_closed(p) : F_quad(p);
    }

    double sigma(double p, double c) const {
        if (p <= 0.0) return 0.0;
        return std::pow(p, inv_m_) * (c - F(p) * inv_m_);
    }

    // from the ODE: p m sigma' = sigma - p C-bar'
    double dsigma(double p, double c) const {
        if (p <= 0.0) return numerics::inf;
        return (sigma(p, c) - p * curve_.derivative(p)) / (p * m_);
    }

    // sigma'(p; c) >= 0  iff  c >= phi(p)
    double phi(double p) const {
        return std::pow(p, 1.0 - inv_m_) * curve_.derivative(p) + F(p) * inv_m_;
    }

    // constant that puts sigma(p) = q
    double const_through(double p, double q) const { return q * std::pow(p, -inv_m_) + F(p) * inv_m_; }

    // phi is 0 below p0 and quasi-convex above it (minimum at p_c / alpha), so its
    // supremum over (lo, hi] sits at one of the two ends
    double phi_sup(double lo, double hi) const {
        if (hi <= p0_) return 0.0;
        double top = phi(hi);
        double a = std::max(lo, p0_);
        if (a <= 0.0) return top;
        const auto& b = curve_.base;
        double d;
        if (a > b.p_c) d = b.derivative(a);
        else if (b.family == CurveFamily::affine || b.alpha >= 1.0) d = b.a;
        else return numerics::inf;
        return std::max(top, std::pow(a, 1.0 - inv_m_) * d + F(a) * inv_m_);
    }

private:
    double F_closed(double p) const {
        const auto& b = curve_.base;
        if (b.family == CurveFamily::affine && p0_ > 0.0) {
            if (m_ == 1) return b.a * std::log(p / p0_);
            double e = 1.0 - inv_m_;
            return b.a / e * (std::pow(p, e) - std::pow(p0_, e));
        }
        // p0 == 0: C-bar'(x) = a alpha x^(alpha-1)
        double e = b.exponent() - inv_m_;
        if (std::abs(e) <= 1e-15) return b.a * b.exponent() * std::log(p);  // p_ref = 1
        return b.a * b.exponent() / e * std::pow(p, e);
    }

    double F_quad(double p) const {
        const auto& b = curve_.base;
        double tol = quad_.abs_tol;
        auto n = quad_.max_subdivisions;
        if (p0_ > 0.0) {
            // v = (x - p_c)^alpha removes the (x - p_c)^(alpha-1) endpoint singularity
            double al = b.exponent(), pc = b.p_c;
            auto g = [&](double v) { return b.a * std::pow(pc + std::pow(v, 1.0 / al), -inv_m_); };
            double lo = std::pow(p0_ - pc, al), hi = std::pow(p - pc, al);
            return numerics::integrate(g, lo, hi, tol, n).value;
        }
        auto cbar = [&](double x) { return curve_.derivative(x); };
        if (diverges_at_zero_) {
            // integrate from p_ref = 1 and add the closed-form value there
            double anchor = power_anchor_;
            if (m_ == 1) {
                auto g = [&](double w) { double x = std::exp(w); return cbar(x); };
                return anchor + numerics::integrate(g, 0.0, std::log(p), tol, n).value;
            }
            auto g = [&](double x) { return cbar(x) * std::pow(x, -inv_m_); };
            return anchor + numerics::integrate(g, 1.0, p, tol, n).value;
        }
        // u = x^(1 - 1/m): x^(-1/m) dx = du / (1 - 1/m)
        double e = 1.0 - inv_m_;
        auto g = [&](double u) { return cbar(std::pow(u, 1.0 / e)) / e; };
        return numerics::integrate(g, 0.0, std::pow(p, e), tol, n).value;
    }

    EffectiveRTCurve curve_;
    int m_;
    double inv_m_ = 1.0;
    double p0_ = 0.0;
    FMethod method_;
    QuadratureOptions quad_;
    bool closed_ = true;
    bool diverges_at_zero_ = false;
    double power_anchor_ = 0.0;
};

inline double antiderivative_F(const EffectiveRTCurve& curve, int k, int n_s, double p,
                               FMethod method = FMethod::automatic) {
    if (k < 1) throw DomainError("antiderivative_F: branch index must be >= 1");
    if (k >= n_s) throw DomainError("antiderivative_F: k = N_S gives a degenerate exponent");
    return BranchKernel(curve, n_s - k, method).F(p);
}

struct BranchSolution {
    int k = 1;
    int n_s = 2;
    double c = 0.0;
};

inline double eval_branch(const BranchSolution& b, const EffectiveRTCurve& curve, double p) {
    if (p < 0.0) throw DomainError("eval_branch: negative price");
    if (b.k < 1 || b.k >= b.n_s) throw DomainError("eval_branch: branch index out of range");
    return BranchKernel(curve, b.n_s - b.k).sigma(p, b.c);
}

// Turning price of sigma between a and b, given sigma' < 0 at b; lo bounds the search.
inline double peak_price(const BranchKernel& ker, double c, double lo, double a, double b) {
    auto g = [&](double x) { return -ker.dsigma(x, c); };
    double ga = g(a);
    while (ga > 0.0) {
        double na = std::max(lo, a * 0.5);
        if (na <= lo || na < 1e-200) return lo;
        b = a;
        a = na;
        ga = g(a);
    }
    double gb = g(b);
    if (ga == 0.0) return a;
    return numerics::increasing_root(g, a, b, ga, gb, 1e-12);
}

// Smallest p >= lo with sigma(p; c) = cap, or nullopt if sigma turns down first.
// With turned_down set, reports whether the search stopped on a decreasing stretch.
inline std::optional<double> find_breakpoint(const BranchKernel& ker, double c, double cap,
                                             double lo = 0.0, double rel_tol = 1e-10,
                                             bool* turned_down = nullptr) {
    if (turned_down) *turned_down = false;
    if (cap <= 0.0) return lo;
    auto s = [&](double p) { return ker.sigma(p, c); };
    if (lo > 0.0 && s(lo) >= cap) return lo;
    double p;
    if (lo > 0.0) {
        p = lo;
    } else {
        p = c > 0.0 ? std::pow(cap / c, ker.m()) : 1e-6;
        if (!(p > 0.0) || !std::isfinite(p)) p = 1e-6;
        while (p > 1e-300 && s(p) >= cap) p *= 0.5;
    }
    double prev = lo > 0.0 ? lo : 0.0;
    for (int it = 0; it < 2000; ++it) {
        double next = std::max(p * 2.0, p + 1e-12);
        double sn = s(next);
        if (sn >= cap) {
            prev = p;
            p = next;
            break;
        }
        if (ker.dsigma(next, c) < 0.0) {
            // turned down; the peak may still clear the cap
            double x = peak_price(ker, c, lo, p, next);
            if (s(x) < cap * (1.0 - 1e-12)) {
                if (turned_down) *turned_down = true;
                return std::nullopt;
            }
            if (s(x) < cap) return x;
            double a = std::max(lo, x * 0.5);
            while (a > lo && s(a) >= cap) a = std::max(lo, a * 0.5);
            prev = a;
            p = x;
            break;
        }
        prev = p;
        p = next;
        if (!std::isfinite(p) || p > 1e12) return std::nullopt;
    }
    double fp = s(p) - cap, fprev = s(prev) - cap;
    if (fp < 0.0) return std::nullopt;
    if (fprev >= 0.0) return prev;
    return numerics::increasing_root([&](double x) { return s(x) - cap; }, prev, p, fprev, fp, rel_tol);
}

inline std::optional<double> branch_breakpoint(const BranchSolution& b, const EffectiveRTCurve& curve,
                                               double cap) {
    if (cap < 0.0) throw DomainError("branch_breakpoint: negative cap");
    if (cap == 0.0) return 0.0;
    return find_breakpoint(BranchKernel(curve, b.n_s - b.k), b.c, cap);
}

// Monotone-nondecreasing check of sigma on (lo, hi]. Grid mode samples the derivative
// sign on n points (geometric when lo = 0); analytic mode uses the supremum of phi.
inline bool branch_monotone(const BranchKernel& ker, double c, double lo, double hi, int n = 200,
                            bool analytic_if_possible = true) {
    const double slack = 1e-12 * std::max(1.0, std::abs(c));
    if (analytic_if_possible) return c >= ker.phi_sup(lo, hi) - slack;
    for (int i = 0; i < n; ++i) {
        double p;
        if (lo <= 0.0) {
            p = hi * std::pow(10.0, -8.0 * (1.0 - double(i) / double(n - 1)));
        } else {
            p = lo + (hi - lo) * double(i + 1) / double(n);
        }
        if (c < ker.phi(p) - slack) return false;
    }
    return true;
}

}  // namespace two_settle
