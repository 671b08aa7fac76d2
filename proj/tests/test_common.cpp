// Utility-layer tests: tokenization, numeric formatting, hashing, dates,
// distribution tails, and the deterministic RNG.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nudgekit/common.hpp"
#include "nudgekit/dates.hpp"
#include "nudgekit/dist.hpp"
#include "nudgekit/rng.hpp"

using namespace nudgekit;

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
    // [TRIVIAL]
    auto tokens = tokenize("The A4 Printer, powered-ON!");
    ASSERT_EQ(tokens.size(), 5u);
    EXPECT_EQ(tokens[0], "the");
    EXPECT_EQ(tokens[1], "a4");
    EXPECT_EQ(tokens[2], "printer");
    EXPECT_EQ(tokens[3], "powered");
    EXPECT_EQ(tokens[4], "on");
}

TEST(Tokenize, DigitsActAsSeparatorsWhenDropped) {
    // [TRIVIAL] text analysis uses keep_digits=false
    auto tokens = tokenize("a4 printer saves 30 minutes", false);
    ASSERT_EQ(tokens.size(), 4u);
    EXPECT_EQ(tokens[0], "a");
    EXPECT_EQ(tokens[1], "printer");
    EXPECT_EQ(tokens[2], "saves");
    EXPECT_EQ(tokens[3], "minutes");
}

TEST(Tokenize, EmptyAndNoAlnum) {
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_TRUE(tokenize("... !!! ---").empty());
}

TEST(RoundSig, TwoSignificantFigures) {
    // [DERIVED] decimal string rounding: 326.116 -> 3.3e+02
    EXPECT_DOUBLE_EQ(round_sig(326.1160714285714, 2), 330.0);
    EXPECT_DOUBLE_EQ(round_sig(1043.5714285714284, 2), 1000.0);
    EXPECT_DOUBLE_EQ(round_sig(313.07142857142856, 2), 310.0);
    EXPECT_DOUBLE_EQ(round_sig(13.696875, 2), 14.0);
    EXPECT_DOUBLE_EQ(round_sig(11.181122448979592, 2), 11.0);
    EXPECT_DOUBLE_EQ(round_sig(4.696071428571428, 2), 4.7);
}

TEST(RoundSig, EdgeCases) {
    EXPECT_DOUBLE_EQ(round_sig(0.0, 2), 0.0);
    EXPECT_DOUBLE_EQ(round_sig(-326.116, 2), -330.0);
    EXPECT_DOUBLE_EQ(round_sig(0.0123456, 3), 0.0123);
    EXPECT_DOUBLE_EQ(round_sig(999.9, 2), 1000.0);
    EXPECT_TRUE(std::isnan(round_sig(std::nan(""), 2)));
}

TEST(FormatDouble, StableRepresentation) {
    EXPECT_EQ(format_double(1.5), "1.5");
    EXPECT_EQ(format_double(330.0), "330");
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(-2.25), "-2.25");
}

TEST(Fnv1a64, ReferenceVectors) {
    // [DERIVED] published FNV-1a 64-bit test vectors
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hex64, ZeroPadded) {
    EXPECT_EQ(hex64(0xcbf29ce484222325ULL), "cbf29ce484222325");
    EXPECT_EQ(hex64(0x1ULL), "0000000000000001");
}

TEST(Dates, KnownEpochDays) {
    // [DERIVED] against a civil calendar: 1970-01-01 is day 0
    EXPECT_EQ(days_from_civil(1970, 1, 1), 0);
    EXPECT_EQ(days_from_civil(2024, 11, 14), 20041);
    EXPECT_EQ(format_iso_date(20041), "2024-11-14");
    EXPECT_EQ(parse_iso_date("2024-11-14"), 20041);
}

TEST(Dates, RoundTripAcrossLeapBoundaries) {
    for (std::int64_t day = days_from_civil(1999, 12, 28); day <= days_from_civil(2001, 1, 5);
         ++day) {
        CivilDate c = civil_from_days(day);
        EXPECT_EQ(days_from_civil(c.year, c.month, c.day), day);
        EXPECT_EQ(parse_iso_date(format_iso_date(day)), day);
    }
    CivilDate leap = civil_from_days(days_from_civil(2000, 2, 29));
    EXPECT_EQ(leap.year, 2000);
    EXPECT_EQ(leap.month, 2u);
    EXPECT_EQ(leap.day, 29u);
}

TEST(Dates, ParseRejectsMalformed) {
    EXPECT_THROW(parse_iso_date("2024-13-01"), ParseError);
    EXPECT_THROW(parse_iso_date("2024-00-10"), ParseError);
    EXPECT_THROW(parse_iso_date("not-a-date"), ParseError);
}

TEST(Dist, NormalSurvival) {
    // [DERIVED] scipy.stats.norm.sf
    EXPECT_NEAR(normal_sf(1.96), 0.024997895148220435, 1e-12);
    EXPECT_NEAR(normal_sf(0.5), 0.30853753872598688, 1e-12);
    EXPECT_NEAR(normal_sf(0.0), 0.5, 1e-15);
    EXPECT_NEAR(normal_two_sided_p(1.96), 2 * 0.024997895148220435, 1e-12);
}

TEST(Dist, Chi2Survival) {
    // [DERIVED] scipy.stats.chi2.sf
    EXPECT_NEAR(chi2_sf(5.99, 2.0), 0.050036627086586287, 1e-10);
    EXPECT_NEAR(chi2_sf(3.84, 1.0), 0.050043521248705189, 1e-10);
    EXPECT_NEAR(chi2_sf(11.34, 3.0), 0.010022517616912462, 1e-10);
    EXPECT_NEAR(chi2_sf(0.0, 2.0), 1.0, 1e-12);
}

TEST(Dist, StudentTTwoSided) {
    // [DERIVED] 2 * scipy.stats.t.sf
    EXPECT_NEAR(t_two_sided_p(2.0, 10.0), 0.073388034770740393, 1e-10);
    EXPECT_NEAR(t_two_sided_p(2.5, 1.0), 0.24223788318168671, 1e-10);
    EXPECT_NEAR(t_two_sided_p(1.3, 30.0), 0.20350095853811689, 1e-10);
    EXPECT_NEAR(t_two_sided_p(-2.0, 10.0), t_two_sided_p(2.0, 10.0), 1e-15);
    EXPECT_NEAR(t_two_sided_p(0.0, 10.0), 1.0, 1e-12);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DeriveSeedSeparatesLabelsAndIndices) {
    std::uint64_t base = 42;
    EXPECT_NE(derive_seed(base, "panel"), derive_seed(base, "engagement"));
    EXPECT_NE(derive_seed(base, "tree", 0), derive_seed(base, "tree", 1));
    EXPECT_EQ(derive_seed(base, "tree", 3), derive_seed(base, "tree", 3));
    EXPECT_NE(derive_seed(base, "tree"), derive_seed(base, "tree", 0));
}

TEST(Rng, UniformBoundsAndBelow) {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(rng.below(13), 13u);
    }
    double v = rng.uniform(2.0, 5.0);
    EXPECT_GE(v, 2.0);
    EXPECT_LT(v, 5.0);
}

TEST(Rng, ShuffleIsPermutation) {
    Rng rng(11);
    std::vector<int> v(20);
    for (int i = 0; i < 20; ++i) v[i] = i;
    rng.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, TruncatedNormalHonorsBounds) {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        double v = rng.truncated_normal(0.15, 0.10, 0.0, 0.60);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 0.60);
    }
}

TEST(Rng, LognormalUnitMeanDegenerateSigma) {
    Rng rng(5);
    EXPECT_DOUBLE_EQ(rng.lognormal_unit_mean(0.0), 1.0);
    // unit mean within sampling error
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) sum += rng.lognormal_unit_mean(0.25);
    EXPECT_NEAR(sum / 20000.0, 1.0, 0.02);
}

TEST(Rng, WeightedIndexSkipsZeroWeights) {
    Rng rng(9);
    std::vector<double> w = {0.0, 1.0, 0.0};
    for (int i = 0; i < 200; ++i) EXPECT_EQ(rng.weighted_index(w), 1u);
}

TEST(Enums, RoundTripNames) {
    EXPECT_EQ(to_string(Arm::T2), "T2");
    EXPECT_EQ(arm_from_string("T2"), Arm::T2);
    EXPECT_EQ(to_string(Resource::hot_water), "hot_water");
    EXPECT_EQ(resource_from_string("hot_water"), Resource::hot_water);
    EXPECT_EQ(to_string(Archetype::rebound), "rebound");
    EXPECT_EQ(archetype_from_string("rebound"), Archetype::rebound);
    EXPECT_THROW(arm_from_string("T3"), std::invalid_argument);
}
