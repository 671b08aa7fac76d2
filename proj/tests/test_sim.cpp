// Trial-simulator tests: population synthesis, greedy cluster randomization,
// panel structure, a zero-noise oracle for the effect arithmetic, engagement
// invariants, cleaning fences with the exclusion boundary, and the panel CSV
// round trip.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nudgekit/trial_sim.hpp"

using namespace nudgekit;

namespace {

SimConfig tiny_config() {
    SimConfig config;
    config.n_participants = 30;
    config.baseline_days = 4;
    config.round_length_days = 1;
    return config;
}

SimConfig zero_noise_config() {
    SimConfig config = tiny_config();
    config.day_noise_sigma = 0.0;
    config.outlier_prob = 0.0;
    config.heavy_missing_prob = 0.0;
    config.light_missing_prob = 0.0;
    return config;
}

// The simulator renormalizes shapes so the weighted mixture mean is 1 per
// round; reproduced here to predict per-archetype effects.
std::vector<std::vector<double>> normalized_shapes(const SimConfig& config) {
    std::vector<std::vector<double>> shapes = config.archetype_shapes;
    for (int r = 0; r < config.rounds; ++r) {
        double mix = 0.0, wsum = 0.0;
        for (std::size_t a = 0; a < shapes.size(); ++a) {
            mix += config.archetype_weights[a] * shapes[a][r];
            wsum += config.archetype_weights[a];
        }
        mix /= wsum;
        for (auto& shape : shapes) shape[r] /= mix;
    }
    return shapes;
}

PanelRow make_row(const std::string& id, Arm arm, const std::string& cluster, int day,
                  const std::string& phase, int round, Resource res, double value,
                  bool missing) {
    PanelRow row;
    row.participant_id = id;
    row.arm = arm;
    row.cluster_id = cluster;
    row.day = day;
    row.phase = phase;
    row.round = round;
    row.resource = res;
    row.value = value;
    row.missing = missing;
    return row;
}

}  // namespace

TEST(SynthPopulation, StructureBoundsAndDeterminism) {
    SimConfig config;
    Population pop = synth_population(config, 42);
    ASSERT_EQ(pop.participants.size(), 233u);

    int member_total = 0;
    std::set<std::string> ids;
    for (const auto& [cluster_id, members] : pop.clusters) {
        EXPECT_GE(members.size(), 1u);
        EXPECT_LE(members.size(), 4u);
        member_total += static_cast<int>(members.size());
        for (const auto& m : members) ids.insert(m);
    }
    EXPECT_EQ(member_total, 233);
    EXPECT_EQ(ids.size(), 233u);
    EXPECT_EQ(pop.participants.front().profile.participant_id, "p001");
    EXPECT_EQ(pop.participants.back().profile.participant_id, "p233");

    for (const auto& sp : pop.participants) {
        for (double v : sp.profile.psych.as_array()) {
            EXPECT_GE(v, 1.0);
            EXPECT_LE(v, 5.0);
        }
        EXPECT_GE(sp.profile.living_budget, 1.0);
        EXPECT_LE(sp.profile.living_budget, 5.0);
        EXPECT_GE(sp.friction, 0.0);
        EXPECT_LE(sp.friction, config.friction_max);
        EXPECT_GT(sp.base_elec, 0.0);
        EXPECT_GT(sp.base_water, 0.0);
        EXPECT_GE(sp.archetype, 0);
        EXPECT_LT(sp.archetype, 5);
        ASSERT_FALSE(sp.profile.appliance_inventory.empty());
        EXPECT_EQ(sp.profile.appliance_inventory.front(), "lighting");
    }

    Population again = synth_population(config, 42);
    for (std::size_t i = 0; i < pop.participants.size(); ++i) {
        EXPECT_EQ(pop.participants[i].profile.participant_id,
                  again.participants[i].profile.participant_id);
        EXPECT_EQ(pop.participants[i].cluster_id, again.participants[i].cluster_id);
        EXPECT_EQ(pop.participants[i].archetype, again.participants[i].archetype);
        EXPECT_DOUBLE_EQ(pop.participants[i].base_elec, again.participants[i].base_elec);
        EXPECT_DOUBLE_EQ(pop.participants[i].friction, again.participants[i].friction);
    }
}

TEST(SynthPopulation, ConfigValidation) {
    SimConfig bad_n;
    bad_n.n_participants = 0;
    EXPECT_THROW(synth_population(bad_n, 1), ValidationError);

    SimConfig mismatched;
    mismatched.archetype_weights = {1.0, 1.0, 1.0, 1.0};
    EXPECT_THROW(synth_population(mismatched, 1), ValidationError);

    SimConfig short_shapes;
    short_shapes.rounds = 4;
    EXPECT_THROW(synth_population(short_shapes, 1), ValidationError);
}

TEST(Randomize, GreedyBalanceAndClusterConsistency) {
    // [DERIVED] greedy smallest-arm assignment keeps arms balanced within
    // the largest cluster size; exact splits vary with the shuffle
    SimConfig config;
    Population pop = synth_population(config, 42);

    for (std::uint64_t seed : {42ULL, 43ULL, 44ULL, 45ULL, 46ULL}) {
        Assignment assignment = randomize(pop, seed);
        int total = 0, lo = 233, hi = 0;
        for (int s : assignment.arm_sizes) {
            total += s;
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        EXPECT_EQ(total, 233);
        EXPECT_LE(hi - lo, 4) << "seed " << seed;
        EXPECT_GE(lo, 74) << "seed " << seed;
        EXPECT_LE(hi, 81) << "seed " << seed;
    }

    Assignment assignment = randomize(pop, 42);
    EXPECT_EQ(assignment.arm_of_participant.size(), 233u);
    EXPECT_EQ(assignment.arm_of_cluster.size(), pop.clusters.size());

    for (const auto& [cluster_id, members] : pop.clusters) {
        Arm arm = assignment.arm_of_cluster.at(cluster_id);
        for (const auto& m : members) EXPECT_EQ(assignment.arm_of_participant.at(m), arm);
    }

    Assignment again = randomize(pop, 42);
    EXPECT_EQ(assignment.arm_of_cluster, again.arm_of_cluster);
}

TEST(SimulateTrial, PanelShapeAndDeterminism) {
    SimConfig config = tiny_config();
    Population pop = synth_population(config, 7);
    Assignment assignment = randomize(pop, 7);
    TrialData data = simulate_trial(pop, assignment, config, 7);

    EXPECT_EQ(data.start_day, parse_iso_date("2024-11-14"));
    ASSERT_EQ(data.panel.rows.size(),
              30u * static_cast<std::size_t>(config.total_days()) * 2u);

    // per-participant layout: total_days consecutive days, two resources per
    // day, baseline then one round per round_length_days
    const auto& rows = data.panel.rows;
    for (int d = 0; d < config.total_days(); ++d) {
        const PanelRow& elec = rows[2 * d];
        const PanelRow& water = rows[2 * d + 1];
        EXPECT_EQ(elec.participant_id, "p001");
        EXPECT_EQ(elec.day, data.start_day + d);
        EXPECT_EQ(elec.resource, Resource::electricity);
        EXPECT_EQ(water.resource, Resource::hot_water);
        bool baseline = d < config.baseline_days;
        EXPECT_EQ(elec.phase, baseline ? "baseline" : "intervention");
        int round = baseline ? 0 : (d - config.baseline_days) / config.round_length_days + 1;
        EXPECT_EQ(elec.round, round);
        EXPECT_EQ(water.round, round);
    }
    int max_round = 0;
    for (const auto& row : rows) {
        max_round = std::max(max_round, row.round);
        if (row.missing)
            EXPECT_TRUE(std::isnan(row.value));
        else
            EXPECT_GT(row.value, 0.0);
    }
    EXPECT_EQ(max_round, config.rounds);

    TrialData again = simulate_trial(pop, assignment, config, 7);
    ASSERT_EQ(again.panel.rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].missing, again.panel.rows[i].missing);
        if (!rows[i].missing) {
            EXPECT_DOUBLE_EQ(rows[i].value, again.panel.rows[i].value);
        }
    }

    SimConfig too_many_rounds = config;
    too_many_rounds.rounds = 6;
    EXPECT_THROW(simulate_trial(pop, assignment, too_many_rounds, 7), ValidationError);
}

TEST(SimulateTrial, ZeroNoiseEffectOracle) {
    // [DERIVED] with all noise off, every value is base x (1 - effect); the
    // effect composition per arm, round, archetype, and friction is checked
    // against an independent recomputation
    SimConfig config = zero_noise_config();
    Population pop = synth_population(config, 11);
    Assignment assignment = randomize(pop, 11);
    TrialData data = simulate_trial(pop, assignment, config, 11);
    auto shapes = normalized_shapes(config);

    // mixture-mean property: weighted shape mean returns to 1 each round
    for (int r = 0; r < config.rounds; ++r) {
        double mix = 0.0, wsum = 0.0;
        for (std::size_t a = 0; a < shapes.size(); ++a) {
            mix += config.archetype_weights[a] * shapes[a][r];
            wsum += config.archetype_weights[a];
        }
        EXPECT_NEAR(mix / wsum, 1.0, 1e-12);
    }

    std::map<std::string, const SynthParticipant*> by_id;
    for (const auto& sp : pop.participants) by_id[sp.profile.participant_id] = &sp;

    int checked_t2_friction = 0;
    for (const auto& row : data.panel.rows) {
        const SynthParticipant& sp = *by_id.at(row.participant_id);
        double base = row.resource == Resource::electricity ? sp.base_elec : sp.base_water;
        if (row.phase == "baseline") {
            EXPECT_DOUBLE_EQ(row.value, base);
            continue;
        }
        double effect = 0.0;
        int r = row.round - 1;
        bool elec = row.resource == Resource::electricity;
        if (row.arm == Arm::C) {
            effect = elec ? config.saving_c_elec : config.saving_c_water;
        } else if (row.arm == Arm::T1) {
            effect = elec ? config.saving_t1_elec : config.saving_t1_water;
        } else {
            double net = elec ? config.t2_net_elec[r] : config.t2_net_water[r];
            net *= shapes[sp.archetype][r];
            if (!elec && row.round >= 2) {
                net *= (1.0 - sp.friction) / (1.0 - config.friction_mean);
                ++checked_t2_friction;
            }
            effect = (elec ? config.saving_c_elec : config.saving_c_water) + net;
        }
        effect = std::min(effect, 0.9);
        EXPECT_DOUBLE_EQ(row.value, base * (1.0 - effect));
    }
    EXPECT_GT(checked_t2_friction, 0);
}

TEST(SimulateTrial, EffectIsCappedAtNinetyPercent) {
    SimConfig config = zero_noise_config();
    config.saving_c_elec = 0.95;
    Population pop = synth_population(config, 3);
    Assignment assignment = randomize(pop, 3);
    TrialData data = simulate_trial(pop, assignment, config, 3);
    for (const auto& row : data.panel.rows) {
        if (row.arm != Arm::C || row.phase != "intervention" ||
            row.resource != Resource::electricity)
            continue;
        const SynthParticipant* sp = nullptr;
        for (const auto& cand : pop.participants)
            if (cand.profile.participant_id == row.participant_id) sp = &cand;
        ASSERT_NE(sp, nullptr);
        EXPECT_DOUBLE_EQ(row.value, sp->base_elec * (1.0 - 0.9));
    }
}

TEST(SimulateTrial, EngagementInvariants) {
    SimConfig config = tiny_config();
    Population pop = synth_population(config, 13);
    Assignment assignment = randomize(pop, 13);
    TrialData data = simulate_trial(pop, assignment, config, 13);

    ASSERT_EQ(data.engagement.size(), 30u * 5u);
    int replies = 0, silent = 0;
    for (const auto& ev : data.engagement) {
        EXPECT_GE(ev.round, 1);
        EXPECT_LE(ev.round, 5);
        if (ev.replied) {
            ++replies;
            EXPECT_TRUE(ev.opened);  // replying implies opening
            EXPECT_GE(ev.reply_hours, 0.5);
            EXPECT_LT(ev.reply_hours, 60.0);
            EXPECT_FALSE(ev.feedback_text.empty());
        } else {
            ++silent;
            EXPECT_DOUBLE_EQ(ev.reply_hours, 0.0);
            EXPECT_TRUE(ev.feedback_text.empty());
        }
    }
    EXPECT_GT(replies, 0);
    EXPECT_GT(silent, 0);
}

TEST(CleanPanel, FencesFlagWithoutDroppingValuesAndAreIdempotent) {
    // [DERIVED] sorted electricity values {1..8, 100}: q1 = 3, q3 = 7,
    // fence = 7 + 3x4 = 19, so only the 100 is flagged
    Panel panel;
    for (int i = 1; i <= 8; ++i)
        panel.rows.push_back(make_row("pA", Arm::C, "c1", i, "intervention", 1,
                                      Resource::electricity, static_cast<double>(i), false));
    panel.rows.push_back(
        make_row("pA", Arm::C, "c1", 9, "intervention", 2, Resource::electricity, 100.0, false));

    CleanResult first = clean_panel(panel);
    EXPECT_DOUBLE_EQ(first.report.upper_fence.at(Resource::electricity), 19.0);
    EXPECT_EQ(first.report.flagged_observations.at(Resource::electricity), 1);
    const PanelRow& flagged = first.panel.rows.back();
    EXPECT_TRUE(flagged.missing);
    EXPECT_DOUBLE_EQ(flagged.value, 100.0);  // value retained for audit

    CleanResult second = clean_panel(first.panel);
    EXPECT_DOUBLE_EQ(second.report.upper_fence.at(Resource::electricity), 19.0);
    EXPECT_EQ(second.report.flagged_observations.at(Resource::electricity), 0);
    EXPECT_EQ(second.excluded, first.excluded);
    for (std::size_t i = 0; i < first.panel.rows.size(); ++i)
        EXPECT_EQ(first.panel.rows[i].missing, second.panel.rows[i].missing);
}

TEST(CleanPanel, ExclusionBoundaryFourteenKeptFifteenExcluded) {
    // [DERIVED] 35 intervention days, rule is invalid > 0.40 x 35 = 14:
    // exactly 14 missing stays in, 15 goes out
    Panel panel;
    auto add_participant = [&](const std::string& id, int missing_days) {
        for (int d = 0; d < 35; ++d) {
            bool missing = d < missing_days;
            panel.rows.push_back(make_row(
                id, Arm::T2, "c-" + id, 100 + d, "intervention", d / 7 + 1,
                Resource::electricity,
                missing ? std::numeric_limits<double>::quiet_NaN() : 3.0, missing));
        }
        // baseline gaps never count toward the exclusion rule
        for (int d = 0; d < 10; ++d)
            panel.rows.push_back(make_row(id, Arm::T2, "c-" + id, 80 + d, "baseline", 0,
                                          Resource::electricity,
                                          std::numeric_limits<double>::quiet_NaN(), true));
    };
    add_participant("p-keep", 14);
    add_participant("p-drop", 15);

    CleanResult result = clean_panel(panel);
    const auto& excluded = result.excluded[Resource::electricity];
    EXPECT_EQ(excluded.count("p-keep"), 0u);
    EXPECT_EQ(excluded.count("p-drop"), 1u);
    const auto& cell = result.report.cells.at(Arm::T2).at(Resource::electricity);
    EXPECT_EQ(cell.kept, 1);
    EXPECT_EQ(cell.excluded, 1);
}

TEST(PanelCsv, RoundTripAndHeaderCheck) {
    SimConfig config = tiny_config();
    config.n_participants = 6;
    Population pop = synth_population(config, 5);
    Assignment assignment = randomize(pop, 5);
    TrialData data = simulate_trial(pop, assignment, config, 5);

    std::string path = std::string(::testing::TempDir()) + "panel_roundtrip.csv";
    write_panel_csv(data.panel, path);
    Panel back = read_panel_csv(path);
    ASSERT_EQ(back.rows.size(), data.panel.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
        const PanelRow& a = data.panel.rows[i];
        const PanelRow& b = back.rows[i];
        EXPECT_EQ(a.participant_id, b.participant_id);
        EXPECT_EQ(a.arm, b.arm);
        EXPECT_EQ(a.cluster_id, b.cluster_id);
        EXPECT_EQ(a.day, b.day);
        EXPECT_EQ(a.phase, b.phase);
        EXPECT_EQ(a.round, b.round);
        EXPECT_EQ(a.resource, b.resource);
        EXPECT_EQ(a.missing, b.missing);
        if (a.missing)
            EXPECT_TRUE(std::isnan(b.value));
        else
            EXPECT_NEAR(a.value, b.value, 1e-9 * std::fabs(a.value));
    }

    std::string bad = std::string(::testing::TempDir()) + "panel_badheader.csv";
    {
        std::ofstream out(bad);
        out << "participant_id,arm,cluster_id,date,phase,round,resource,value,wrong\n";
        out << "p001,C,c001,2024-11-14,baseline,0,electricity,1.0,0\n";
    }
    EXPECT_THROW(read_panel_csv(bad), ParseError);

    std::string ragged = std::string(::testing::TempDir()) + "panel_ragged.csv";
    {
        std::ofstream out(ragged);
        out << "participant_id,arm,cluster_id,date,phase,round,resource,value,missing\n";
        out << "p001,C,c001,2024-11-14,baseline,0\n";
    }
    EXPECT_THROW(read_panel_csv(ragged), ParseError);
}

TEST(SimConfigJson, RoundTripAndPartialParse) {
    SimConfig config;
    config.n_participants = 99;
    config.reply_prob_t2 = 0.33;
    nlohmann::json j;
    to_json(j, config);
    SimConfig back;
    from_json(j, back);
    EXPECT_EQ(back.n_participants, 99);
    EXPECT_DOUBLE_EQ(back.reply_prob_t2, 0.33);
    EXPECT_EQ(back.t2_net_elec, config.t2_net_elec);

    SimConfig partial;
    from_json(nlohmann::json{{"n_participants", 12}}, partial);
    EXPECT_EQ(partial.n_participants, 12);
    EXPECT_DOUBLE_EQ(partial.base_elec_mean, 3.0);  // defaults fill the rest
    EXPECT_EQ(partial.rounds, 5);
}
