#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "types.hpp"

namespace two_settle {

inline constexpr const char* version = "1.0.0";

// 12 significant digits; non-finite values print as nan / inf / -inf.
inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Rounds every floating value to 12 significant digits so dumps are stable across platforms.
inline nlohmann::json rounded(const nlohmann::json& j) {
    if (j.is_number_float()) {
        double x = j.get<double>();
        if (!std::isfinite(x)) return nullptr;
        return std::stod(fmt(x));
    }
    if (j.is_object()) {
        nlohmann::json o = nlohmann::json::object();
        for (auto it = j.begin(); it != j.end(); ++it) o[it.key()] = rounded(it.value());
        return o;
    }
    if (j.is_array()) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& x : j) a.push_back(rounded(x));
        return a;
    }
    return j;
}

struct OutputMeta {
    std::string config_hash = "none";
    std::string command;

    std::string csv_comment() const {
        return std::string("# two-settle ") + version + " config_hash=" + config_hash + " command=" + command + "\n";
    }

    nlohmann::json json() const { return {{"tool", "two-settle"}, {"version", version}, {"config_hash", config_hash}, {"command", command}}; }
};

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& body, const OutputMeta& meta) {
    nlohmann::json j = rounded(body);
    j["meta"] = meta.json();
    write_text(path, j.dump(2) + "\n");
}

// Rows of preformatted cells under a header; the first line is a metadata comment.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row(std::vector<std::string> cells) {
        if (cells.size() != header_.size()) throw DomainError("csv row width does not match the header");
        rows_.push_back(std::move(cells));
        return *this;
    }

    std::string str(const OutputMeta* meta = nullptr) const {
        std::ostringstream o;
        if (meta) o << meta->csv_comment();
        line(o, header_);
        for (const auto& r : rows_) line(o, r);
        return o.str();
    }

    std::size_t size() const { return rows_.size(); }

private:
    static void line(std::ostringstream& o, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) o << (i ? "," : "") << cells[i];
        o << "\n";
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Scenario CSV: scenario_id,t,demand,q_1..q_N, one row per (scenario, t).
inline std::string scenarios_csv(const std::vector<MarketScenario>& sc, const OutputMeta* meta = nullptr) {
    std::size_t n = sc.empty() ? 0 : sc[0].suppliers();
    std::vector<std::string> head{"scenario_id", "t", "demand"};
    for (std::size_t i = 0; i < n; ++i) head.push_back("q_" + std::to_string(i + 1));
    CsvTable t(head);
    for (std::size_t k = 0; k < sc.size(); ++k)
        for (std::size_t s = 0; s < sc[k].steps(); ++s) {
            std::vector<std::string> r{std::to_string(k), std::to_string(s), fmt(sc[k].demand[s])};
            for (std::size_t i = 0; i < n; ++i) r.push_back(fmt(sc[k].capacity[i][s]));
            t.row(std::move(r));
        }
    return t.str(meta);
}

inline std::vector<MarketScenario> read_scenarios_csv(std::istream& in) {
    std::string line;
    std::vector<std::string> head;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) head.push_back(f);
        break;
    }
    if (head.size() < 3 || head[0] != "scenario_id" || head[1] != "t" || head[2] != "demand")
        throw ConfigError("scenario csv: header must start with scenario_id,t,demand");
    const std::size_t n = head.size() - 3;
    for (std::size_t i = 0; i < n; ++i)
        if (head[3 + i] != "q_" + std::to_string(i + 1)) throw ConfigError("scenario csv: expected column q_" + std::to_string(i + 1));
    std::map<long, MarketScenario> acc;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            char* end = nullptr;
            double x = std::strtod(f.c_str(), &end);
            if (f.empty() || *end != '\0') throw ConfigError("scenario csv line " + std::to_string(lineno) + ": bad number '" + f + "'");
            v.push_back(x);
        }
        if (v.size() != head.size()) throw ConfigError("scenario csv line " + std::to_string(lineno) + ": wrong field count");
        long id = long(v[0]);
        auto& sc = acc[id];
        if (sc.capacity.empty()) sc.capacity.resize(n);
        if (std::size_t(v[1]) != sc.demand.size())
            throw ConfigError("scenario csv line " + std::to_string(lineno) + ": rows must be ordered by t");
        if (v[2] < 0.0) throw ConfigError("scenario csv line " + std::to_string(lineno) + ": negative demand");
        sc.demand.push_back(v[2]);
        for (std::size_t i = 0; i < n; ++i) {
            if (v[3 + i] < 0.0) throw ConfigError("scenario csv line " + std::to_string(lineno) + ": negative capacity");
            sc.capacity[i].push_back(v[3 + i]);
        }
    }
    std::vector<MarketScenario> out;
    for (auto& [id, sc] : acc) {
        if (!out.empty() && sc.steps() != out[0].steps()) throw ConfigError("scenario csv: scenarios differ in length");
        out.push_back(std::move(sc));
    }
    if (out.empty()) throw ConfigError("scenario csv: no rows");
    return out;
}

}  // namespace two_settle
