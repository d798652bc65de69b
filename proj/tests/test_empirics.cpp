#include <gtest/gtest.h>

#include <sstream>

#include "two_settle/empirics.hpp"

using namespace two_settle;
using namespace two_settle::empirics;

namespace {

Ingested ingest(const std::string& text, Schema s = {}) {
    std::istringstream in(text);
    return ingest_csv(in, s);
}

std::string stamp(int day, int hour, int minute = 0) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "2017-03-%02d %02d:%02d", day, hour, minute);
    return buf;
}

// one hourly DA and RT value per hour; [1, 6] pre, [8, 13] post
std::string spread_fixture(double da_pre, double rt_pre, double da_post, double rt_post) {
    std::string s = "timestamp,market,zone,value\n";
    for (int day = 1; day <= 13; ++day) {
        if (day == 7) continue;
        bool pre = day < 7;
        for (int h = 0; h < 24; ++h) {
            s += stamp(day, h) + ",DA,Z," + std::to_string(pre ? da_pre : da_post) + "\n";
            s += stamp(day, h) + ",RT,Z," + std::to_string(pre ? rt_pre : rt_post) + "\n";
        }
    }
    return s;
}

StudyWindow window() { return make_window("2017-03-07", "2017-03-01:2017-03-07", "2017-03-08:2017-03-14"); }

}  // namespace

TEST(Ingest, ValidFixture) {
    auto r = ingest("timestamp,market,zone,value\n2017-01-01 00:00,DA,NP15,30.5\n2017-01-01 01:00,DA,NP15,-2\n"
                    "2017-01-01 02:00,DA,NP15,28\n");
    EXPECT_EQ(r.da.size(), 3u);
    EXPECT_TRUE(r.rt.empty());
    EXPECT_TRUE(r.rejects.empty());
    EXPECT_EQ(r.da[1].value, -2.0);
}

TEST(Ingest, MissingPriceIsRejected) {
    auto r = ingest("timestamp,market,zone,value\n2017-01-01 00:00,DA,NP15,30.5\n2017-01-01 01:00,DA,NP15,\n"
                    "2017-01-01 02:00,DA,NP15,28\n");
    EXPECT_EQ(r.da.size(), 2u);
    ASSERT_EQ(r.rejects.size(), 1u);
    EXPECT_EQ(r.rejects[0].line, 3u);
    EXPECT_EQ(r.rejects[0].reason, "missing value");
    EXPECT_FALSE(r.warnings.empty());
    Schema strict;
    strict.strict = true;
    EXPECT_THROW(ingest("timestamp,market,zone,value\n2017-01-01 00:00,DA,Z,\n", strict), DataError);
}

TEST(Ingest, MixedCadenceSplitsByMarket) {
    std::string s = "zone,value,market,timestamp\n";
    s += "Z,30,DA," + stamp(1, 0) + "\n";
    for (int k = 0; k < 12; ++k) s += "Z,31,RT," + stamp(1, 0, 5 * k) + "\n";
    s += "Z,32,DA," + stamp(1, 1) + "\n";
    auto r = ingest(s);
    EXPECT_EQ(r.da.size(), 2u);
    EXPECT_EQ(r.rt.size(), 12u);
    EXPECT_EQ(infer_per_hour(r.rt), 12);
    EXPECT_EQ(infer_per_hour(r.da), 1);
}

TEST(Ingest, RejectsBadRows) {
    auto r = ingest("timestamp,market,zone,value\n2017-13-01 00:00,DA,Z,1\n2017-01-01 00:00,XX,Z,1\n"
                    "2017-01-01 00:00,DA,,1\n2017-01-01 00:00,DA,Z,abc\n2017-01-01 00:00,DA,Z\n"
                    "2017-01-01 01:00,DA,Z,1\n2017-01-01 00:00,DA,Z,1\n");
    EXPECT_EQ(r.da.size(), 1u);
    EXPECT_EQ(r.rejects.size(), 6u);
    EXPECT_THROW(ingest("time,market,zone,value\n"), DataError);
    EXPECT_THROW(ingest(""), DataError);
}

TEST(Timestamps, OffsetsOrderButDoNotShiftLocalTime) {
    auto a = parse_timestamp("2017-01-01T05:00-08:00");
    ASSERT_TRUE(a);
    EXPECT_EQ(hour_of_day(a->local), 5);
    EXPECT_EQ(*a->offset, -480);
    EXPECT_FALSE(parse_timestamp("2017-02-30 00:00"));
    EXPECT_FALSE(parse_timestamp("2017-01-01 24:00"));
    EXPECT_EQ(format_local(parse_timestamp("2017-03-05 07:45")->local), "2017-03-05 07:45");
}

TEST(Hourly, MeanOfTwelve) {
    std::vector<PriceRecord> recs;
    for (int k = 0; k < 12; ++k) recs.push_back({*parse_timestamp(stamp(1, 3, 5 * k)), Market::RT, "Z", double(k + 1)});
    auto h = hourly_aggregate(recs);
    ASSERT_EQ(h.size(), 1u);
    EXPECT_DOUBLE_EQ(h[0].value, 6.5);
    EXPECT_FALSE(h[0].low_coverage);
    for (auto& r : recs) r.value = 17.25;
    EXPECT_DOUBLE_EQ(hourly_aggregate(recs)[0].value, 17.25);
}

TEST(Hourly, LowCoverageFlag) {
    std::vector<PriceRecord> recs;
    for (int k = 0; k < 8; ++k) recs.push_back({*parse_timestamp(stamp(1, 3, 5 * k)), Market::RT, "Z", 1.0});
    auto h = hourly_aggregate(recs, 12);
    ASSERT_EQ(h.size(), 1u);
    EXPECT_EQ(h[0].count, 8);
    EXPECT_TRUE(h[0].low_coverage);
    recs.push_back({*parse_timestamp(stamp(1, 3, 40)), Market::RT, "Z", 1.0});
    EXPECT_FALSE(hourly_aggregate(recs, 12)[0].low_coverage);
}

TEST(Hourly, GapsAreMarked) {
    std::vector<PriceRecord> recs{{*parse_timestamp(stamp(1, 0)), Market::DA, "Z", 1.0},
                                  {*parse_timestamp(stamp(1, 3)), Market::DA, "Z", 2.0}};
    auto h = hourly_aggregate(recs);
    ASSERT_EQ(h.size(), 4u);
    EXPECT_TRUE(h[1].gap);
    EXPECT_TRUE(h[2].gap);
    EXPECT_FALSE(h[3].gap);
}

TEST(Spread, HandComputedFixture) {
    auto r = ingest(spread_fixture(10, 12, 11, 11));
    auto t = spread_table(hourly_aggregate(r.da), hourly_aggregate(r.rt), window());
    ASSERT_EQ(t.rows.size(), 24u);
    for (const auto& row : t.rows) {
        EXPECT_DOUBLE_EQ(row.pre.mean, 2.0);
        EXPECT_DOUBLE_EQ(row.post.mean, 0.0);
        EXPECT_EQ(row.pre.count, 6u);
        EXPECT_EQ(row.post.count, 6u);
    }
    EXPECT_DOUBLE_EQ(t.summary.pre_mean_abs, 2.0);
    EXPECT_DOUBLE_EQ(t.summary.post_mean_abs, 0.0);
    EXPECT_TRUE(std::isnan(t.summary.percent_change));
    EXPECT_DOUBLE_EQ(t.summary.percent_change_pre, 100.0);
    auto again = spread_summary(t.rows);
    EXPECT_EQ(again.pre_mean_abs, t.summary.pre_mean_abs);
    EXPECT_EQ(again.change, t.summary.change);
}

TEST(Spread, ReferencePatternNeedsFourAndFive) {
    auto r = ingest(spread_fixture(10, 12, 11, 11));
    auto t = spread_table(hourly_aggregate(r.da), hourly_aggregate(r.rt), window());
    EXPECT_FALSE(compare_with_reference(t, nullptr).spread_pattern_matches);
    t.rows[4].pre.mean = -1.0;
    t.rows[5].pre.mean = 0.0;
    auto c = compare_with_reference(t, nullptr);
    EXPECT_TRUE(c.spread_pattern_matches);
    EXPECT_EQ(c.pre_nonpositive_hours, (std::vector<int>{4, 5}));
}

TEST(Ratio, HalfEverywhere) {
    auto r = ingest(spread_fixture(50, 100, 50, 100));
    auto t = demand_ratio_table(hourly_aggregate(r.da), hourly_aggregate(r.rt), window());
    for (const auto& row : t.rows) {
        EXPECT_DOUBLE_EQ(row.pre.mean, 0.5);
        EXPECT_DOUBLE_EQ(row.post.mean, 0.5);
    }
    EXPECT_DOUBLE_EQ(t.summary.pre_min, 0.5);
    EXPECT_DOUBLE_EQ(t.summary.decline_max, 0.0);
    EXPECT_EQ(t.zero_rt_excluded, 0u);
}

TEST(Ratio, ZeroRtDemandExcluded) {
    auto r = ingest(spread_fixture(50, 0, 50, 100));
    auto t = demand_ratio_table(hourly_aggregate(r.da), hourly_aggregate(r.rt), window());
    EXPECT_EQ(t.zero_rt_excluded, 6u * 24u);
    EXPECT_EQ(t.rows[0].pre.count, 0u);
    EXPECT_TRUE(std::isnan(t.summary.pre_mean));
}

TEST(Window, Validation) {
    EXPECT_THROW(make_window("2017-03-05", "2017-03-01:2017-03-07", "2017-03-08:2017-03-14"), ConfigError);
    EXPECT_THROW(parse_period("2017-03-01"), ConfigError);
    auto p = parse_period("2017-03-01 12:00:2017-03-02 00:00");
    EXPECT_EQ(p.end - p.start, 12 * 60);
}

TEST(Aggregate, IsIdempotentOnHourlyInput) {
    auto r = ingest(spread_fixture(10, 12, 11, 11));
    auto once = hourly_aggregate(r.da);
    auto twice = hourly_aggregate(to_records(once, Market::DA));
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t k = 0; k < once.size(); ++k) {
        EXPECT_EQ(once[k].hour, twice[k].hour);
        EXPECT_EQ(once[k].gap, twice[k].gap);
        if (!once[k].gap) {
            EXPECT_EQ(once[k].value, twice[k].value);
        }
    }
}

TEST(Ingest, RepeatedDstHourNeedsOffsets) {
    auto with = ingest("timestamp,market,zone,value\n2017-11-05 01:30-07:00,DA,Z,10\n2017-11-05 01:30-08:00,DA,Z,20\n");
    EXPECT_EQ(with.da.size(), 2u);
    auto h = hourly_aggregate(with.da);
    ASSERT_EQ(h.size(), 1u);
    EXPECT_EQ(h[0].value, 15.0);
    auto without = ingest("timestamp,market,zone,value\n2017-11-05 01:30,DA,Z,10\n2017-11-05 01:30,DA,Z,20\n");
    EXPECT_EQ(without.da.size(), 1u);
    EXPECT_EQ(without.rejects.size(), 1u);
}
