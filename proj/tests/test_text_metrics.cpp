// Content-analysis tests: dictionary loading, greedy longest-match counting
// in both token and character modes, drift staging, and class shares.

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nudgekit/text_metrics.hpp"

using namespace nudgekit;

namespace {

KeywordDictionaries small_dicts() {
    KeywordDictionaries d;
    d.add(ContentCategory::usage_gap, "usage gap");
    d.add(ContentCategory::usage_gap, "trended up");
    d.add(ContentCategory::appliance_context, "air conditioner");
    d.add(ContentCategory::appliance_context, "air");
    d.add(ContentCategory::appliance_context, "laptop");
    d.add(ContentCategory::planning_action, "turn off");
    d.add(ContentCategory::social_norms, "dorm average");
    d.add(ContentCategory::encouraging_efficacy, "small changes add up");
    return d;
}

std::string write_temp(const std::string& name, const std::string& body) {
    std::string path = std::string(::testing::TempDir()) + name;
    std::ofstream out(path);
    out << body;
    return path;
}

}  // namespace

TEST(Dictionaries, AddRejectsEmptyAndDuplicate) {
    KeywordDictionaries d;
    d.add(ContentCategory::usage_gap, "usage gap");
    EXPECT_THROW(d.add(ContentCategory::usage_gap, "usage gap"), ValidationError);
    EXPECT_THROW(d.add(ContentCategory::social_norms, ""), ValidationError);
    // same phrase in a different category is allowed
    d.add(ContentCategory::social_norms, "usage gap");
}

TEST(Dictionaries, LoaderParsesHeadersAndComments) {
    std::string path = write_temp("dicts_ok.txt",
                                  "# comment\n"
                                  "[usage_gap]\n"
                                  "usage gap\n"
                                  "  trended up  \n"
                                  "\n"
                                  "[planning_action]\n"
                                  "turn off\n");
    KeywordDictionaries d = load_dictionaries(path);
    EXPECT_EQ(d.phrases[static_cast<int>(ContentCategory::usage_gap)].size(), 2u);
    EXPECT_EQ(d.phrases[static_cast<int>(ContentCategory::usage_gap)][1], "trended up");
    EXPECT_EQ(d.phrases[static_cast<int>(ContentCategory::planning_action)].size(), 1u);
}

TEST(Dictionaries, LoaderErrors) {
    std::string no_header = write_temp("dicts_nohdr.txt", "usage gap\n");
    EXPECT_THROW(load_dictionaries(no_header), ParseError);
    std::string bad_cat = write_temp("dicts_badcat.txt", "[no_such_category]\nfoo\n");
    EXPECT_THROW(load_dictionaries(bad_cat), ParseError);
    std::string dup = write_temp("dicts_dup.txt", "[usage_gap]\nusage gap\nusage gap\n");
    EXPECT_THROW(load_dictionaries(dup), ValidationError);
    EXPECT_THROW(load_dictionaries("/nonexistent/dicts.txt"), IoError);
}

TEST(CountKeywords, GreedyLongestMatchConsumesNestedPhrase) {
    // [DERIVED] "air conditioner" must win over "air"; the shorter phrase
    // still matches a free-standing occurrence later in the message
    KeywordDictionaries d = small_dicts();
    ContentProfile p = count_keywords("Turn off the air conditioner and let fresh air in.", d);
    EXPECT_EQ(p.counts[static_cast<int>(ContentCategory::appliance_context)], 2);
    EXPECT_EQ(p.counts[static_cast<int>(ContentCategory::planning_action)], 1);
    EXPECT_EQ(p.total(), 3);

    // once "air conditioner" is consumed, "air" cannot re-match inside it
    ContentProfile q = count_keywords("the air conditioner hums", d);
    EXPECT_EQ(q.counts[static_cast<int>(ContentCategory::appliance_context)], 1);
}

TEST(CountKeywords, MultiplicityAndCase) {
    KeywordDictionaries d = small_dicts();
    ContentProfile p = count_keywords("LAPTOP by the laptop, Laptop!", d);
    EXPECT_EQ(p.counts[static_cast<int>(ContentCategory::appliance_context)], 3);
    EXPECT_TRUE(p.has_shares);
    EXPECT_DOUBLE_EQ(p.shares[static_cast<int>(ContentCategory::appliance_context)], 1.0);
}

TEST(CountKeywords, EmptyMessageHasNoShares) {
    KeywordDictionaries d = small_dicts();
    ContentProfile p = count_keywords("nothing relevant here", d);
    EXPECT_EQ(p.total(), 0);
    EXPECT_FALSE(p.has_shares);
    for (double s : p.shares) EXPECT_DOUBLE_EQ(s, 0.0);
}

TEST(CountKeywords, TokenModeIgnoresPunctuationAndDigits) {
    KeywordDictionaries d = small_dicts();
    // tokens: punctuation and digit boundaries vanish before matching
    ContentProfile p = count_keywords("Usage-gap: 42 usage gap!", d);
    EXPECT_EQ(p.counts[static_cast<int>(ContentCategory::usage_gap)], 2);
}

TEST(CountKeywords, CharModeMatchesRawSubstrings) {
    KeywordDictionaries d;
    d.add(ContentCategory::appliance_context, "air conditioner");
    d.add(ContentCategory::appliance_context, "air");
    ContentProfile p = count_keywords("The AIR conditioner hums; airy rooms stay cool.", d,
                                      MatchMode::chars);
    // "air conditioner" needs the literal substring (case-insensitive);
    // "airy" contains "air" as raw characters, unlike token mode
    EXPECT_EQ(p.counts[static_cast<int>(ContentCategory::appliance_context)], 2);

    ContentProfile q = count_keywords("airy", d, MatchMode::tokens);
    EXPECT_EQ(q.total(), 0);
}

TEST(DriftStage, RoundBuckets) {
    EXPECT_EQ(drift_stage(1), 0);
    EXPECT_EQ(drift_stage(2), 0);
    EXPECT_EQ(drift_stage(3), 1);
    EXPECT_EQ(drift_stage(4), 1);
    EXPECT_EQ(drift_stage(5), 2);
}

TEST(RoundDrift, StageMeansAndMonotoneFlag) {
    // [DERIVED] planning counts 1, 2, 4 across stages -> means 1, 2, 4 and a
    // strict monotone increase; usage_gap stays flat -> flag off
    std::vector<ContentProfile> profiles;
    auto make = [](int round, int planning, int usage) {
        ContentProfile p;
        p.round = round;
        p.counts[static_cast<int>(ContentCategory::planning_action)] = planning;
        p.counts[static_cast<int>(ContentCategory::usage_gap)] = usage;
        return p;
    };
    profiles.push_back(make(1, 1, 2));
    profiles.push_back(make(2, 1, 2));
    profiles.push_back(make(3, 2, 2));
    profiles.push_back(make(4, 2, 2));
    profiles.push_back(make(5, 4, 2));
    DriftTable t = round_drift(profiles);
    EXPECT_EQ(t.stage_messages[0], 2);
    EXPECT_EQ(t.stage_messages[1], 2);
    EXPECT_EQ(t.stage_messages[2], 1);
    int pa = static_cast<int>(ContentCategory::planning_action);
    int ug = static_cast<int>(ContentCategory::usage_gap);
    EXPECT_DOUBLE_EQ(t.stage_mean_counts[0][pa], 1.0);
    EXPECT_DOUBLE_EQ(t.stage_mean_counts[1][pa], 2.0);
    EXPECT_DOUBLE_EQ(t.stage_mean_counts[2][pa], 4.0);
    EXPECT_TRUE(t.monotone_increase[pa]);
    EXPECT_FALSE(t.monotone_increase[ug]);
}

TEST(GroupShares, AveragesOnlyMessagesWithMatches) {
    std::vector<ContentProfile> profiles;
    ContentProfile a;
    a.arm_class = "personalized";
    a.counts = {2, 0, 2, 0, 0};
    a.shares = {0.5, 0.0, 0.5, 0.0, 0.0};
    a.has_shares = true;
    ContentProfile b;
    b.arm_class = "personalized";
    b.counts = {0, 0, 4, 0, 0};
    b.shares = {0.0, 0.0, 1.0, 0.0, 0.0};
    b.has_shares = true;
    ContentProfile empty;
    empty.arm_class = "personalized";  // zero matches, must not dilute
    ContentProfile c;
    c.arm_class = "conventional";
    c.counts = {1, 0, 0, 0, 0};
    c.shares = {1.0, 0.0, 0.0, 0.0, 0.0};
    c.has_shares = true;
    profiles = {a, b, empty, c};

    GroupShares g = group_shares(profiles);
    ASSERT_EQ(g.shares.count("personalized"), 1u);
    ASSERT_EQ(g.shares.count("conventional"), 1u);
    EXPECT_EQ(g.messages_used.at("personalized"), 2);
    EXPECT_EQ(g.messages_used.at("conventional"), 1);
    EXPECT_DOUBLE_EQ(g.shares.at("personalized")[0], 0.25);
    EXPECT_DOUBLE_EQ(g.shares.at("personalized")[2], 0.75);
    EXPECT_DOUBLE_EQ(g.shares.at("conventional")[0], 1.0);
    EXPECT_EQ(g.shares.count("absent_class"), 0u);
}
