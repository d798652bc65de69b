#pragma once

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "numerics.hpp"
#include "types.hpp"

namespace two_settle {

enum class DistFamily { uniform, truncated_normal, beta };

inline const char* to_string(DistFamily f) {
    switch (f) {
        case DistFamily::uniform: return "uniform";
        case DistFamily::truncated_normal: return "truncated_normal";
        default: return "beta";
    }
}

// Bounded marginal on [lo, hi]. truncated_normal uses (mu, sigma) before truncation;
// beta uses shape (a, b) scaled onto [lo, hi].
struct Marginal {
    DistFamily family = DistFamily::uniform;
    double lo = 0.0;
    double hi = 1.0;
    double mu = 0.5;
    double sigma = 0.25;
    double a = 2.0;
    double b = 2.0;

    static Marginal uniform(double lo, double hi) { return {DistFamily::uniform, lo, hi}; }
    static Marginal truncated_normal(double lo, double hi, double mu, double sigma) {
        return {DistFamily::truncated_normal, lo, hi, mu, sigma};
    }
    static Marginal beta(double lo, double hi, double a, double b) {
        return {DistFamily::beta, lo, hi, 0.5, 0.25, a, b};
    }

    bool degenerate() const { return hi == lo; }

    void validate(const std::string& what) const {
        if (!(hi >= lo)) throw ConfigError(what + ": upper bound below lower bound");
        if (family == DistFamily::truncated_normal && !(sigma > 0.0)) throw ConfigError(what + ": sigma must be positive");
        if (family == DistFamily::beta && !(a > 0.0 && b > 0.0)) throw ConfigError(what + ": beta shapes must be positive");
    }

    double quantile(double u) const {
        if (degenerate()) return lo;
        u = std::clamp(u, 1e-300, 1.0 - 1e-16);
        double x;
        switch (family) {
            case DistFamily::uniform: x = lo + (hi - lo) * u; break;
            case DistFamily::truncated_normal: {
                boost::math::normal_distribution<double> z;
                double fa = boost::math::cdf(z, (lo - mu) / sigma), fb = boost::math::cdf(z, (hi - mu) / sigma);
                double v = std::clamp(fa + u * (fb - fa), 1e-300, 1.0 - 1e-16);
                x = mu + sigma * boost::math::quantile(z, v);
                break;
            }
            default: {
                boost::math::beta_distribution<double> d(a, b);
                x = lo + (hi - lo) * boost::math::quantile(d, u);
            }
        }
        return std::clamp(x, lo, hi);
    }

    double pdf(double x) const {
        if (degenerate() || x < lo || x > hi) return 0.0;
        double w = hi - lo;
        switch (family) {
            case DistFamily::uniform: return 1.0 / w;
            case DistFamily::truncated_normal: {
                boost::math::normal_distribution<double> z;
                double fa = boost::math::cdf(z, (lo - mu) / sigma), fb = boost::math::cdf(z, (hi - mu) / sigma);
                return boost::math::pdf(z, (x - mu) / sigma) / (sigma * (fb - fa));
            }
            default: {
                boost::math::beta_distribution<double> d(a, b);
                return boost::math::pdf(d, (x - lo) / w) / w;
            }
        }
    }

    double cdf(double x) const {
        if (x < lo) return 0.0;
        if (x >= hi) return 1.0;
        double w = hi - lo;
        switch (family) {
            case DistFamily::uniform: return (x - lo) / w;
            case DistFamily::truncated_normal: {
                boost::math::normal_distribution<double> z;
                double fa = boost::math::cdf(z, (lo - mu) / sigma), fb = boost::math::cdf(z, (hi - mu) / sigma);
                return (boost::math::cdf(z, (x - mu) / sigma) - fa) / (fb - fa);
            }
            default: {
                boost::math::beta_distribution<double> d(a, b);
                return boost::math::cdf(d, (x - lo) / w);
            }
        }
    }

    double mean() const {
        if (degenerate()) return lo;
        switch (family) {
            case DistFamily::uniform: return 0.5 * (lo + hi);
            case DistFamily::truncated_normal: {
                boost::math::normal_distribution<double> z;
                double al = (lo - mu) / sigma, be = (hi - mu) / sigma;
                double zz = boost::math::cdf(z, be) - boost::math::cdf(z, al);
                return mu + sigma * (boost::math::pdf(z, al) - boost::math::pdf(z, be)) / zz;
            }
            default: return lo + (hi - lo) * a / (a + b);
        }
    }

    // E[g(X)] by quadrature over the support
    template <class G>
    double expect(G&& g) const {
        if (degenerate()) return g(lo);
        return numerics::integrate([&](double x) { return g(x) * pdf(x); }, lo, hi, 1e-12).value;
    }
};

struct ScenarioModel {
    int time_steps = 24;
    Marginal demand = Marginal::uniform(0.0, 1.0);
    double demand_rho = 0.0;
    Marginal capacity = Marginal::uniform(0.0, 1.0);
    double capacity_rho = 0.0;
    int suppliers = 3;
    std::uint64_t seed = 1;

    void validate() const {
        if (time_steps < 1) throw ConfigError("scenario.time_steps must be >= 1");
        if (suppliers < 0) throw ConfigError("market.suppliers must be >= 0");
        demand.validate("scenario.demand");
        capacity.validate("scenario.capacity");
        if (demand.lo < 0.0) throw ConfigError("scenario.demand: lower bound must be >= 0");
        if (capacity.lo < 0.0) throw ConfigError("scenario.capacity: lower bound must be >= 0");
        if (suppliers > 0 && !(capacity.hi > 0.0)) throw ConfigError("scenario.capacity: upper bound must be positive");
        if (!(demand_rho >= 0.0 && demand_rho < 1.0)) throw ConfigError("scenario.demand.rho must lie in [0, 1)");
        if (!(capacity_rho >= 0.0 && capacity_rho < 1.0)) throw ConfigError("scenario.capacity.rho must lie in [0, 1)");
    }
};

namespace rng {

inline std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// counter-based uniform in (0, 1) keyed by (seed, scenario, path, t)
inline double uniform(std::uint64_t seed, std::uint64_t scenario, std::uint64_t path, std::uint64_t t) {
    std::uint64_t h = splitmix(seed);
    h = splitmix(h ^ scenario);
    h = splitmix(h ^ (path * 0x100000001b3ULL));
    h = splitmix(h ^ (t * 0xc2b2ae3d27d4eb4fULL));
    return (double(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double normal_quantile(double u) {
    static const boost::math::normal_distribution<double> z;
    return boost::math::quantile(z, u);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace rng

// Gaussian-copula AR(1) path mapped through the marginal quantile.
inline std::vector<double> sample_path(const Marginal& m, double rho, int steps, std::uint64_t seed,
                                       std::uint64_t scenario, std::uint64_t path) {
    std::vector<double> out(static_cast<std::size_t>(steps));
    if (m.degenerate()) {
        std::fill(out.begin(), out.end(), m.lo);
        return out;
    }
    double z = 0.0, s = std::sqrt(1.0 - rho * rho);
    for (int t = 0; t < steps; ++t) {
        double e = rng::normal_quantile(rng::uniform(seed, scenario, path, std::uint64_t(t)));
        z = t == 0 ? e : rho * z + s * e;
        out[std::size_t(t)] = m.quantile(rng::normal_cdf(z));
    }
    return out;
}

inline MarketScenario sample_one(const ScenarioModel& model, std::uint64_t index) {
    MarketScenario sc;
    sc.demand = sample_path(model.demand, model.demand_rho, model.time_steps, model.seed, index, 0);
    for (int i = 0; i < model.suppliers; ++i)
        sc.capacity.push_back(
            sample_path(model.capacity, model.capacity_rho, model.time_steps, model.seed, index, std::uint64_t(i) + 1));
    return sc;
}

inline std::vector<MarketScenario> sample(const ScenarioModel& model, int n, std::uint64_t first = 0) {
    if (n < 1) throw ConfigError("sample: n must be >= 1");
    model.validate();
    std::vector<MarketScenario> out;
    out.reserve(std::size_t(n));
    for (int k = 0; k < n; ++k) out.push_back(sample_one(model, first + std::uint64_t(k)));
    return out;
}

inline double capacity_density(const ScenarioModel& model, double x) { return model.capacity.pdf(x); }

struct ShortfallMoments {
    double probability_weighted_price = 0.0;  // E[p_s 1{Q < s}]
    double probability_weighted_price_se = 0.0;
    double shortfall_integral = 0.0;  // E[(Q - s) (p_s)' 1{Q < s}]
    double shortfall_integral_se = 0.0;
    std::size_t samples = 0;
};

// One sample per (scenario, t, supplier): realized capacity, RT price, and its sensitivity.
struct ShortfallSample {
    double capacity;
    double price;
    double sensitivity;
};

inline ShortfallMoments shortfall_moment(double s, const std::vector<ShortfallSample>& samples) {
    if (samples.empty()) throw DomainError("shortfall_moment: empty scenario set");
    std::vector<double> a(samples.size()), b(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& x = samples[k];
        bool under = x.capacity < s;
        a[k] = under ? x.price : 0.0;
        b[k] = under ? (x.capacity - s) * x.sensitivity : 0.0;
    }
    ShortfallMoments m;
    m.probability_weighted_price = numerics::mean(a);
    m.probability_weighted_price_se = numerics::standard_error(a);
    m.shortfall_integral = numerics::mean(b);
    m.shortfall_integral_se = numerics::standard_error(b);
    m.samples = samples.size();
    return m;
}

}  // namespace two_settle
