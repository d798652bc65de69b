#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"

namespace two_settle::empirics {

// Malformed input file (header, or too many rejected rows in strict mode).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Market { DA, RT };

inline const char* to_string(Market m) { return m == Market::DA ? "DA" : "RT"; }

// Market-local wall clock in minutes since 1970-01-01 00:00.
using Minutes = std::int64_t;

struct Timestamp {
    Minutes local = 0;
    std::optional<int> offset;  // UTC offset in minutes when given

    Minutes order_key() const { return offset ? local - *offset : local; }
};

inline std::chrono::year_month_day civil_date(Minutes local) {
    auto days = local >= 0 ? local / 1440 : -((-local + 1439) / 1440);
    return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days}}};
}

inline int hour_of_day(Minutes local) {
    Minutes m = local % 1440;
    if (m < 0) m += 1440;
    return int(m / 60);
}

inline Minutes hour_start(Minutes local) {
    Minutes h = local >= 0 ? local / 60 : -((-local + 59) / 60);
    return h * 60;
}

// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS]", optionally followed
// by "Z" or "+HH:MM" / "-HH:MM".
inline std::optional<Timestamp> parse_timestamp(const std::string& s) {
    int y, mo, d, h = 0, mi = 0, sec = 0, n = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &n) != 3 || n != 10) return std::nullopt;
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == ' ' || s[pos] == 'T')) {
        int k = 0;
        if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d%n", &h, &mi, &k) != 2 || k != 5) return std::nullopt;
        pos += 1 + std::size_t(k);
        if (pos < s.size() && s[pos] == ':') {
            if (std::sscanf(s.c_str() + pos + 1, "%2d%n", &sec, &k) != 1 || k != 2) return std::nullopt;
            pos += 3;
        }
    }
    Timestamp ts;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            ts.offset = 0;
        } else if ((s[pos] == '+' || s[pos] == '-') && s.size() - pos == 6 && s[pos + 3] == ':') {
            int oh, om;
            if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d", &oh, &om) != 2 || oh > 23 || om > 59) return std::nullopt;
            ts.offset = (s[pos] == '-' ? -1 : 1) * (oh * 60 + om);
        } else {
            return std::nullopt;
        }
    }
    if (h > 23 || mi > 59 || sec > 59) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(mo)}, std::chrono::day{unsigned(d)}};
    if (!ymd.ok()) return std::nullopt;
    Minutes days = std::chrono::sys_days{ymd}.time_since_epoch().count();
    ts.local = days * 1440 + h * 60 + mi;
    return ts;
}

inline std::string format_local(Minutes local) {
    auto ymd = civil_date(local);
    Minutes m = local - std::chrono::sys_days{ymd}.time_since_epoch().count() * 1440;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), int(m / 60), int(m % 60));
    return buf;
}

struct PriceRecord {
    Timestamp time;
    Market market = Market::DA;
    std::string zone;
    double value = 0.0;  // price in currency/MWh or load in MW; negative prices are kept
};

struct Reject {
    std::size_t line = 0;
    std::string raw;
    std::string reason;
};

// Logical column name -> header name in the file.
struct Schema {
    std::string timestamp = "timestamp";
    std::string market = "market";
    std::string zone = "zone";
    std::string value = "value";
    bool strict = false;
    double max_reject_fraction = 0.01;
};

struct Ingested {
    std::vector<PriceRecord> da;
    std::vector<PriceRecord> rt;
    std::vector<Reject> rejects;
    std::size_t rows = 0;
    std::vector<std::string> warnings;

    std::size_t records() const { return da.size() + rt.size(); }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        auto b = f.find_first_not_of(" \t\r");
        auto e = f.find_last_not_of(" \t\r");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline Ingested ingest_csv(std::istream& in, const Schema& schema = {}) {
    std::string header;
    if (!std::getline(in, header)) throw DataError("ingest: empty input, no header");
    auto cols = split_csv_line(header);
    auto find = [&](const std::string& name) {
        auto it = std::find(cols.begin(), cols.end(), name);
        if (it == cols.end()) throw DataError("ingest: header lacks column '" + name + "'");
        return std::size_t(it - cols.begin());
    };
    const std::size_t ct = find(schema.timestamp), cm = find(schema.market), cz = find(schema.zone),
                      cv = find(schema.value);
    Ingested out;
    std::map<std::pair<std::string, int>, Minutes> last;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        ++out.rows;
        auto f = split_csv_line(line);
        auto reject = [&](std::string why) { out.rejects.push_back({lineno, line, std::move(why)}); };
        if (f.size() != cols.size()) {
            reject("expected " + std::to_string(cols.size()) + " fields, found " + std::to_string(f.size()));
            continue;
        }
        auto ts = parse_timestamp(f[ct]);
        if (!ts) {
            reject("unparseable timestamp '" + f[ct] + "'");
            continue;
        }
        Market mk;
        if (f[cm] == "DA" || f[cm] == "da")
            mk = Market::DA;
        else if (f[cm] == "RT" || f[cm] == "rt")
            mk = Market::RT;
        else {
            reject("unknown market '" + f[cm] + "'");
            continue;
        }
        if (f[cz].empty()) {
            reject("missing zone");
            continue;
        }
        auto v = parse_number(f[cv]);
        if (!v) {
            reject(f[cv].empty() ? "missing value" : "non-numeric value '" + f[cv] + "'");
            continue;
        }
        auto key = std::make_pair(f[cz], int(mk));
        auto it = last.find(key);
        if (it != last.end() && ts->order_key() <= it->second) {
            reject("timestamp not strictly after the previous row of this zone and market");
            continue;
        }
        last[key] = ts->order_key();
        PriceRecord r{*ts, mk, f[cz], *v};
        (mk == Market::DA ? out.da : out.rt).push_back(std::move(r));
    }
    if (out.rows > 0) {
        double frac = double(out.rejects.size()) / double(out.rows);
        if (frac > schema.max_reject_fraction) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "ingest: %zu of %zu rows rejected (%.3g%%)", out.rejects.size(), out.rows,
                          100.0 * frac);
            if (schema.strict) throw DataError(buf);
            out.warnings.push_back(buf);
        }
    }
    return out;
}

inline Ingested ingest_csv(const std::string& path, const Schema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("ingest: cannot open " + path);
    return ingest_csv(in, schema);
}

inline void write_rejects(const std::vector<Reject>& rejects, std::ostream& out) {
    out << "line,reason,raw\n";
    for (const auto& r : rejects) {
        std::string raw = r.raw;
        std::string q;
        for (char c : raw) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        out << r.line << ",\"" << r.reason << "\",\"" << q << "\"\n";
    }
}

struct HourlyValue {
    std::string zone;
    Minutes hour = 0;  // local hour start
    double value = std::numeric_limits<double>::quiet_NaN();
    int count = 0;
    int expected = 1;
    bool low_coverage = false;
    bool gap = false;
};

using HourlySeries = std::vector<HourlyValue>;

// Observations per hour from the median spacing of consecutive timestamps: 5 min -> 12, 60 -> 1.
inline int infer_per_hour(const std::vector<PriceRecord>& recs) {
    std::map<std::string, Minutes> prev;
    std::vector<Minutes> gaps;
    for (const auto& r : recs) {
        auto it = prev.find(r.zone);
        if (it != prev.end() && r.time.local > it->second) gaps.push_back(r.time.local - it->second);
        prev[r.zone] = r.time.local;
    }
    if (gaps.empty()) return 1;
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    Minutes g = gaps[gaps.size() / 2];
    return g >= 60 ? 1 : int(std::max<Minutes>(1, 60 / g));
}

// Mean of the observations inside each local hour. Hours with fewer than 3/4 of the expected
// count (9 of 12 at five-minute cadence) are flagged; missing hours between a zone's first and
// last observation appear as gap markers. Output is sorted by (zone, hour).
inline HourlySeries hourly_aggregate(const std::vector<PriceRecord>& recs, int expected = 0) {
    if (expected <= 0) expected = infer_per_hour(recs);
    std::map<std::pair<std::string, Minutes>, std::pair<double, int>> acc;
    for (const auto& r : recs) {
        auto& a = acc[{r.zone, hour_start(r.time.local)}];
        a.first += r.value;
        a.second += 1;
    }
    const int need = expected >= 12 ? 9 : (3 * expected + 3) / 4;
    HourlySeries out;
    for (auto it = acc.begin(); it != acc.end(); ++it) {
        if (!out.empty() && out.back().zone == it->first.first)
            for (Minutes h = out.back().hour + 60; h < it->first.second; h += 60) {
                HourlyValue g;
                g.zone = it->first.first;
                g.hour = h;
                g.expected = expected;
                g.gap = true;
                g.low_coverage = true;
                out.push_back(g);
            }
        HourlyValue v;
        v.zone = it->first.first;
        v.hour = it->first.second;
        v.count = it->second.second;
        v.value = it->second.first / v.count;
        v.expected = expected;
        v.low_coverage = v.count < need;
        out.push_back(v);
    }
    return out;
}

// Hourly series as records stamped at the hour start.
inline std::vector<PriceRecord> to_records(const HourlySeries& s, Market m) {
    std::vector<PriceRecord> out;
    for (const auto& v : s)
        if (!v.gap) out.push_back({Timestamp{v.hour, std::nullopt}, m, v.zone, v.value});
    return out;
}

struct Period {
    Minutes start = 0;
    Minutes end = 0;  // exclusive

    bool contains(Minutes t) const { return t >= start && t < end; }
};

struct StudyWindow {
    Period pre;
    Period post;
    Minutes golive = 0;

    void validate() const {
        if (!(pre.start < pre.end)) throw ConfigError("study window: pre period is empty");
        if (!(post.start < post.end)) throw ConfigError("study window: post period is empty");
        if (!(pre.end <= golive && golive <= post.start))
            throw ConfigError("study window: require pre.end <= golive <= post.start");
    }

    // 0 pre, 1 post, -1 outside both
    int classify(Minutes t) const { return pre.contains(t) ? 0 : post.contains(t) ? 1 : -1; }
};

inline Minutes parse_time_or_throw(const std::string& s, const char* what) {
    auto t = parse_timestamp(s);
    if (!t) throw ConfigError(std::string(what) + ": cannot parse '" + s + "'");
    return t->local;
}

// "start:end" with dates or date-times; the separator is the first ':' after a full date.
inline Period parse_period(const std::string& s) {
    // a time part contains ':' too, so split at the position that leaves two valid timestamps
    for (std::size_t k = 10; k < s.size(); ++k) {
        if (s[k] != ':') continue;
        auto a = parse_timestamp(s.substr(0, k)), b = parse_timestamp(s.substr(k + 1));
        if (a && b) return {a->local, b->local};
    }
    throw ConfigError("period '" + s + "': expected START:END");
}

inline StudyWindow make_window(const std::string& golive, const std::string& pre, const std::string& post) {
    StudyWindow w{parse_period(pre), parse_period(post), parse_time_or_throw(golive, "golive")};
    w.validate();
    return w;
}

struct CellStats {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    std::size_t count = 0;
};

inline CellStats cell_stats(const std::vector<double>& x) {
    CellStats c;
    c.count = x.size();
    if (x.empty()) return c;
    double s = 0.0;
    for (double v : x) s += v;
    c.mean = s / double(x.size());
    if (x.size() > 1) {
        double ss = 0.0;
        for (double v : x) ss += (v - c.mean) * (v - c.mean);
        c.se = std::sqrt(ss / double(x.size() - 1) / double(x.size()));
    }
    return c;
}

struct HourRow {
    int hour = 0;
    CellStats pre;
    CellStats post;
};

// Hour pairs present in both series, keyed by (zone, hour start); gaps are dropped.
template <class Fn>
std::vector<HourRow> paired_table(const HourlySeries& a, const HourlySeries& b, const StudyWindow& w, Fn&& f,
                                  std::size_t* dropped = nullptr) {
    w.validate();
    std::map<std::pair<std::string, Minutes>, double> bm;
    for (const auto& v : b)
        if (!v.gap) bm[{v.zone, v.hour}] = v.value;
    std::vector<std::vector<double>> cells[2] = {std::vector<std::vector<double>>(24),
                                                std::vector<std::vector<double>>(24)};
    std::size_t drop = 0;
    for (const auto& v : a) {
        if (v.gap) continue;
        auto it = bm.find({v.zone, v.hour});
        if (it == bm.end()) continue;
        int c = w.classify(v.hour);
        if (c < 0) continue;
        auto x = f(v.value, it->second);
        if (!x) {
            ++drop;
            continue;
        }
        cells[c][std::size_t(hour_of_day(v.hour))].push_back(*x);
    }
    if (dropped) *dropped = drop;
    std::vector<HourRow> rows(24);
    for (int h = 0; h < 24; ++h) {
        rows[std::size_t(h)].hour = h;
        rows[std::size_t(h)].pre = cell_stats(cells[0][std::size_t(h)]);
        rows[std::size_t(h)].post = cell_stats(cells[1][std::size_t(h)]);
    }
    return rows;
}

struct SpreadSummary {
    double pre_mean_abs = 0.0;   // mean over hours of |mean spread|
    double post_mean_abs = 0.0;
    double change = 0.0;         // pre - post
    double percent_change = std::numeric_limits<double>::quiet_NaN();      // (pre - post) / post
    double percent_change_pre = std::numeric_limits<double>::quiet_NaN();  // (pre - post) / pre
};

struct SpreadTable {
    std::vector<HourRow> rows;
    SpreadSummary summary;
};

inline double mean_abs(const std::vector<HourRow>& rows, bool post) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows) {
        const auto& c = post ? r.post : r.pre;
        if (c.count == 0) continue;
        s += std::abs(c.mean);
        ++n;
    }
    return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

// Recomputes the summary from the table alone.
inline SpreadSummary spread_summary(const std::vector<HourRow>& rows) {
    SpreadSummary s;
    s.pre_mean_abs = mean_abs(rows, false);
    s.post_mean_abs = mean_abs(rows, true);
    s.change = s.pre_mean_abs - s.post_mean_abs;
    if (s.post_mean_abs != 0.0) s.percent_change = 100.0 * s.change / s.post_mean_abs;
    if (s.pre_mean_abs != 0.0) s.percent_change_pre = 100.0 * s.change / s.pre_mean_abs;
    return s;
}

// mean(RT - DA) by hour of day, pre and post
inline SpreadTable spread_table(const HourlySeries& da, const HourlySeries& rt, const StudyWindow& w) {
    SpreadTable t;
    t.rows = paired_table(rt, da, w, [](double r, double d) { return std::optional<double>(r - d); });
    t.summary = spread_summary(t.rows);
    return t;
}

struct RatioSummary {
    double pre_mean = 0.0;   // mean over hours of the hourly means
    double post_mean = 0.0;
    double pre_min = 0.0, pre_max = 0.0;
    double decline_min = 0.0, decline_max = 0.0;  // pre - post, per hour
};

struct RatioTable {
    std::vector<HourRow> rows;
    RatioSummary summary;
    std::size_t zero_rt_excluded = 0;
};

inline RatioSummary ratio_summary(const std::vector<HourRow>& rows) {
    RatioSummary s;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double sp = 0.0, so = 0.0;
    int np = 0, no = 0;
    s.pre_min = s.decline_min = std::numeric_limits<double>::infinity();
    s.pre_max = s.decline_max = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        if (r.pre.count) {
            sp += r.pre.mean;
            ++np;
            s.pre_min = std::min(s.pre_min, r.pre.mean);
            s.pre_max = std::max(s.pre_max, r.pre.mean);
        }
        if (r.post.count) {
            so += r.post.mean;
            ++no;
        }
        if (r.pre.count && r.post.count) {
            double d = r.pre.mean - r.post.mean;
            s.decline_min = std::min(s.decline_min, d);
            s.decline_max = std::max(s.decline_max, d);
        }
    }
    s.pre_mean = np ? sp / np : nan;
    s.post_mean = no ? so / no : nan;
    if (!np) s.pre_min = s.pre_max = nan;
    if (!std::isfinite(s.decline_min)) s.decline_min = s.decline_max = nan;
    return s;
}

// mean(DA cleared / RT demand) by hour of day; hours with zero RT demand are excluded and counted
inline RatioTable demand_ratio_table(const HourlySeries& da_load, const HourlySeries& rt_load, const StudyWindow& w) {
    RatioTable t;
    t.rows = paired_table(
        da_load, rt_load, w,
        [](double d, double r) { return r == 0.0 ? std::nullopt : std::optional<double>(d / r); },
        &t.zero_rt_excluded);
    t.summary = ratio_summary(t.rows);
    return t;
}

// Reference pattern against real CAISO extracts: positive pre-VT spreads at every hour except
// 4 and 5 am, and a pre-VT ratio band of 45% to 53%.
struct ComparisonReport {
    std::vector<int> pre_nonpositive_hours;
    bool spread_pattern_matches = false;
    bool ratio_band_matches = false;
    bool ratio_decline_matches = false;
    double ratio_pre_min = 0.0, ratio_pre_max = 0.0;
    double ratio_decline_min = 0.0, ratio_decline_max = 0.0;
    bool has_ratios = false;
};

inline ComparisonReport compare_with_reference(const SpreadTable& s, const RatioTable* r) {
    ComparisonReport c;
    for (const auto& row : s.rows)
        if (row.pre.count && !(row.pre.mean > 0.0)) c.pre_nonpositive_hours.push_back(row.hour);
    c.spread_pattern_matches = c.pre_nonpositive_hours == std::vector<int>{4, 5};
    if (r) {
        c.has_ratios = true;
        c.ratio_pre_min = r->summary.pre_min;
        c.ratio_pre_max = r->summary.pre_max;
        c.ratio_decline_min = r->summary.decline_min;
        c.ratio_decline_max = r->summary.decline_max;
        c.ratio_band_matches = c.ratio_pre_min >= 0.45 && c.ratio_pre_max <= 0.53;
        c.ratio_decline_matches = c.ratio_decline_min >= 0.10 && c.ratio_decline_max <= 0.15;
    }
    return c;
}

}  // namespace two_settle::empirics
