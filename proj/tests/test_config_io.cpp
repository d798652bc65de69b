#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "two_settle/reports.hpp"

using namespace two_settle;

TEST(Config, RoundTrip) {
    auto c = default_config();
    c.trader_count = infinite_traders;
    c.market.num.max_iterations = 17;
    auto j = to_json(c);
    auto back = config_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(back.trader_count, infinite_traders);
    EXPECT_EQ(back.market.num.max_iterations, 17);
    EXPECT_EQ(back.scenario.suppliers, 3);
}

TEST(Config, EmptyObjectGivesDefaults) {
    auto c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(to_json(c), to_json(RunConfig{}));
}

TEST(Config, UnknownKeysAreErrors) {
    auto j = to_json(default_config());
    j["numerics"]["gird_points"] = 10;
    EXPECT_THROW(config_from_json(j), ConfigError);
    auto k = to_json(default_config());
    k["extra"] = true;
    EXPECT_THROW(config_from_json(k), ConfigError);
}

TEST(Config, InvalidValuesAreErrors) {
    auto j = to_json(default_config());
    j["numerics"]["curve_damping"] = 1.5;
    EXPECT_THROW(config_from_json(j), ConfigError);
    auto k = to_json(default_config());
    k["market"]["traders"]["family"] = "curved";
    EXPECT_THROW(config_from_json(k), ConfigError);
    auto t = to_json(default_config());
    t["scenario"]["count"] = "many";
    EXPECT_THROW(config_from_json(t), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, HashIgnoresWorkersAndOutput) {
    auto a = default_config(), b = default_config();
    b.market.num.workers = 8;
    b.output.directory = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 8;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(ScenarioCsv, RoundTrip) {
    ScenarioModel m;
    m.time_steps = 5;
    m.capacity = Marginal::beta(0.0, 0.6, 2.0, 2.0);
    m.seed = 9;
    auto sc = sample(m, 4);
    OutputMeta meta{"abc", "sample"};
    std::istringstream in(scenarios_csv(sc, &meta));
    auto back = read_scenarios_csv(in);
    ASSERT_EQ(back.size(), sc.size());
    for (std::size_t k = 0; k < sc.size(); ++k) {
        ASSERT_EQ(back[k].steps(), 5u);
        for (std::size_t t = 0; t < 5; ++t) {
            EXPECT_NEAR(back[k].demand[t], sc[k].demand[t], 1e-11);
            for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back[k].capacity[i][t], sc[k].capacity[i][t], 1e-11);
        }
    }
}

TEST(ScenarioCsv, RejectsMalformedInput) {
    std::istringstream bad_head("id,t,demand\n0,0,1\n");
    EXPECT_THROW(read_scenarios_csv(bad_head), ConfigError);
    std::istringstream negative("scenario_id,t,demand,q_1\n0,0,-1,0.5\n");
    EXPECT_THROW(read_scenarios_csv(negative), ConfigError);
    std::istringstream order("scenario_id,t,demand,q_1\n0,1,1,0.5\n");
    EXPECT_THROW(read_scenarios_csv(order), ConfigError);
    std::istringstream text("scenario_id,t,demand,q_1\n0,0,x,0.5\n");
    EXPECT_THROW(read_scenarios_csv(text), ConfigError);
}

TEST(Output, NumberFormatting) {
    EXPECT_EQ(fmt(0.1), "0.1");
    EXPECT_EQ(fmt(1.0 / 3.0), "0.333333333333");
    EXPECT_EQ(fmt(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(rounded(nlohmann::json(std::nan(""))), nullptr);
    EXPECT_EQ(CsvTable({"a", "b"}).row({"1", "2"}).str(), "a,b\n1,2\n");
    EXPECT_THROW(CsvTable({"a"}).row({"1", "2"}), DomainError);
}

namespace {

nlohmann::json read_json(const std::string& rel) {
    std::ifstream in(std::string(TWO_SETTLE_SOURCE_DIR) + "/" + rel);
    if (!in) throw std::runtime_error("cannot open " + rel);
    return nlohmann::json::parse(in);
}

nlohmann::json schema_defaults(const nlohmann::json& node) {
    if (!node.contains("properties")) return node.at("default");
    nlohmann::json out = nlohmann::json::object();
    for (auto it = node["properties"].begin(); it != node["properties"].end(); ++it)
        out[it.key()] = schema_defaults(it.value());
    return out;
}

}  // namespace

TEST(Schema, DefaultsMatchTheCode) {
    auto defaults = schema_defaults(read_json("docs/config.schema.json"));
    EXPECT_EQ(defaults, to_json(RunConfig{}));
    EXPECT_EQ(to_json(config_from_json(defaults)), defaults);
}

TEST(Schema, ShippedDefaultConfigIsTheRenewableWorld) {
    auto c = config_from_json(read_json("examples/configs/default.json"));
    EXPECT_EQ(to_json(c), to_json(default_config()));
    EXPECT_EQ(config_hash(c), config_hash(default_config()));
}
