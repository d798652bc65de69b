#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace two_settle::numerics {

inline constexpr double inf = std::numeric_limits<double>::infinity();

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    std::size_t subdivisions = 0;
};

// Globally adaptive Gauss-Kronrod (7/15) on [a, b]: always splits the interval
// with the largest error estimate until the summed estimate meets abs_tol.
template <class F>
QuadResult integrate(F&& f, double a, double b, double abs_tol = 1e-10,
                     std::size_t max_subdivisions = 10000) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    if (a == b) return {};
    double sign = 1.0;
    if (b < a) {
        std::swap(a, b);
        sign = -1.0;
    }
    struct Piece {
        double a, b, value, error;
        bool operator<(const Piece& o) const { return error < o.error; }
    };
    auto rule = [&](double lo, double hi) {
        double err = 0.0;
        double v = gk::integrate(f, lo, hi, 0, 0.0, &err);
        return Piece{lo, hi, v, err};
    };
    std::priority_queue<Piece> heap;
    Piece first = rule(a, b);
    double total = first.value, total_err = first.error;
    heap.push(first);
    std::size_t n = 1;
    while (total_err > abs_tol && n < max_subdivisions) {
        Piece worst = heap.top();
        double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;
        heap.pop();
        Piece l = rule(worst.a, mid), r = rule(mid, worst.b);
        total += l.value + r.value - worst.value;
        total_err += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
        ++n;
    }
    // re-sum to shed accumulated cancellation from the running updates
    double sum = 0.0, esum = 0.0;
    while (!heap.empty()) {
        sum += heap.top().value;
        esum += heap.top().error;
        heap.pop();
    }
    return {sign * sum, esum, n};
}

// Smallest x in [lo, hi] with pred(x) true, for pred monotone false -> true.
// Requires pred(hi). Returns hi-side of the final bracket.
template <class P>
double bisect_first_true(P&& pred, double lo, double hi, double rel_tol = 1e-10,
                         int max_iter = 400) {
    if (pred(lo)) return lo;
    for (int i = 0; i < max_iter; ++i) {
        double width = hi - lo;
        if (width <= rel_tol * std::max(std::abs(hi), 1e-300)) break;
        double mid = lo + 0.5 * width;
        if (mid <= lo || mid >= hi) break;
        if (pred(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

// Bracketed root of an increasing f with f(lo) < 0 <= f(hi) by TOMS 748; returns the end
// of the final bracket where f >= 0, within relative width rel_tol.
template <class F>
double increasing_root(F&& f, double lo, double hi, double flo, double fhi, double rel_tol = 1e-10,
                       std::uintmax_t max_iter = 200) {
    if (fhi == 0.0) return hi;
    int bits = std::clamp(int(std::ceil(-std::log2(rel_tol))) + 1, 4, 52);
    boost::math::tools::eps_tolerance<double> tol(bits);
    auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, max_iter);
    if (f(r.first) >= 0.0) return r.first;
    return r.second;
}

// Root of f on [lo, hi] given f(lo) and f(hi) of opposite sign (or zero).
template <class F>
double bisect_root(F&& f, double lo, double hi, double abs_tol = 1e-12, int max_iter = 400) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    double fhi = f(hi);
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) throw DomainError("bisect_root: no sign change on bracket");
    for (int i = 0; i < max_iter && hi - lo > abs_tol; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct MinResult {
    double x;
    double fx;
};

// Golden-section search for a minimum of f on [a, b] to bracket width tol.
// On ties the left point is kept, so flat regions resolve to the smallest x.
template <class F>
MinResult golden_section(F&& f, double a, double b, double tol) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    return fc <= fd ? MinResult{c, fc} : MinResult{d, fd};
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = a;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * double(i) / double(n - 1);
    return v;
}

// Kahan-free but order-fixed mean, so parallel reductions stay reproducible.
inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1) / double(v.size()));
}

}  // namespace two_settle::numerics
