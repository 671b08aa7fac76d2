#pragma once
// Synthetic three-arm cluster-randomized trial: population synthesis, cluster
// randomization, daily consumption panel with archetype response shapes,
// engagement events, and panel cleaning.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nudgekit/common.hpp"
#include "nudgekit/csv.hpp"
#include "nudgekit/dates.hpp"
#include "nudgekit/profile.hpp"
#include "nudgekit/rng.hpp"

namespace nudgekit {

struct SimConfig {
    int n_participants = 233;
    // Cluster size frequencies for sizes 1..4 (dorm rooms shared by study
    // participants are rare; most rooms contribute one person).
    std::vector<double> cluster_size_weights = {180.0, 17.0, 5.0, 1.0};
    std::string start_date = "2024-11-14";
    int baseline_days = 28;
    int rounds = kNumRounds;
    int round_length_days = 7;

    double base_elec_mean = 3.0;   // kWh per room-day
    double base_water_mean = 36.0; // L per person-day
    double base_elec_sigma = 0.35; // between-participant log sd
    double base_water_sigma = 0.30;
    double day_noise_sigma = 0.25; // within-participant lognormal, unit mean
    double outlier_prob = 0.004;   // metering spikes, multiplies by U(4, 8)

    // Intervention-phase proportional savings relative to own baseline level.
    double saving_c_elec = 0.141;
    double saving_c_water = 0.043;
    double saving_t1_elec = 0.160;
    double saving_t1_water = 0.115;
    // T2 saving net of control, per round.
    std::vector<double> t2_net_elec = {0.084, 0.282, 0.174, 0.180, 0.180};
    std::vector<double> t2_net_water = {0.107, -0.011, 0.132, 0.130, 0.132};

    // Response archetypes: shape of the net effect over rounds plus mixture
    // weights. Shapes are renormalized so the mixture mean is 1 each round,
    // keeping the configured net trajectory intact.
    std::vector<double> archetype_weights = {0.28, 0.25, 0.20, 0.17, 0.10};
    std::vector<std::vector<double>> archetype_shapes = {
        {1.8, 1.5, 1.2, 1.1, 1.0},      // quick: large early reductions
        {0.4, 0.8, 1.2, 1.5, 1.7},      // gradual: persistent build-up
        {1.8, 1.4, 0.9, 0.6, 0.5},      // rebound: early cut, partial recovery
        {0.1, 0.2, 0.6, 1.4, 1.9},      // late: slow start, strong finish
        {-2.6, -2.3, -2.1, -2.0, -1.9}, // adverse: consumption above trend
    };
    // Psych/budget tilt of archetype odds (responsive types skew toward
    // conservation-minded, better-budgeted participants).
    std::vector<double> archetype_tilt = {0.5, 0.3, 0.0, -0.2, -0.8};

    // Hot-water response friction from round 2 on (mid-trial disruption).
    double friction_mean = 0.15;
    double friction_sd = 0.10;
    double friction_max = 0.60;

    // Per-round reply probabilities (chosen so the chance of replying in at
    // least one of five rounds lands near the observed per-arm shares).
    double reply_prob_c = 0.1557;
    double reply_prob_t1 = 0.1601;
    double reply_prob_t2 = 0.2124;
    double reply_psych_coef = 0.0;     // logistic tilt, logit scale
    double reply_archetype_coef = 0.0; // applied to tilt ordering above

    double open_prob = 0.80;   // report-open chance per round; replying implies opening

    // Reporting mixture.
    double heavy_reporter_share = 0.30;
    double heavy_missing_prob = 0.52;
    double light_missing_prob = 0.05;

    int intervention_days() const { return rounds * round_length_days; }
    int total_days() const { return baseline_days + intervention_days(); }
};

inline void to_json(nlohmann::json& j, const SimConfig& c) {
    j = {{"n_participants", c.n_participants},
         {"cluster_size_weights", c.cluster_size_weights},
         {"start_date", c.start_date},
         {"baseline_days", c.baseline_days},
         {"rounds", c.rounds},
         {"round_length_days", c.round_length_days},
         {"base_elec_mean", c.base_elec_mean},
         {"base_water_mean", c.base_water_mean},
         {"base_elec_sigma", c.base_elec_sigma},
         {"base_water_sigma", c.base_water_sigma},
         {"day_noise_sigma", c.day_noise_sigma},
         {"outlier_prob", c.outlier_prob},
         {"saving_c_elec", c.saving_c_elec},
         {"saving_c_water", c.saving_c_water},
         {"saving_t1_elec", c.saving_t1_elec},
         {"saving_t1_water", c.saving_t1_water},
         {"t2_net_elec", c.t2_net_elec},
         {"t2_net_water", c.t2_net_water},
         {"archetype_weights", c.archetype_weights},
         {"archetype_shapes", c.archetype_shapes},
         {"archetype_tilt", c.archetype_tilt},
         {"friction_mean", c.friction_mean},
         {"friction_sd", c.friction_sd},
         {"friction_max", c.friction_max},
         {"reply_prob_c", c.reply_prob_c},
         {"reply_prob_t1", c.reply_prob_t1},
         {"reply_prob_t2", c.reply_prob_t2},
         {"reply_psych_coef", c.reply_psych_coef},
         {"reply_archetype_coef", c.reply_archetype_coef},
         {"open_prob", c.open_prob},
         {"heavy_reporter_share", c.heavy_reporter_share},
         {"heavy_missing_prob", c.heavy_missing_prob},
         {"light_missing_prob", c.light_missing_prob}};
}

inline void from_json(const nlohmann::json& j, SimConfig& c) {
    SimConfig d;
    auto get = [&](const char* key, auto& field, const auto& fallback) {
        field = j.contains(key) ? j.at(key).get<std::decay_t<decltype(field)>>() : fallback;
    };
    get("n_participants", c.n_participants, d.n_participants);
    get("cluster_size_weights", c.cluster_size_weights, d.cluster_size_weights);
    get("start_date", c.start_date, d.start_date);
    get("baseline_days", c.baseline_days, d.baseline_days);
    get("rounds", c.rounds, d.rounds);
    get("round_length_days", c.round_length_days, d.round_length_days);
    get("base_elec_mean", c.base_elec_mean, d.base_elec_mean);
    get("base_water_mean", c.base_water_mean, d.base_water_mean);
    get("base_elec_sigma", c.base_elec_sigma, d.base_elec_sigma);
    get("base_water_sigma", c.base_water_sigma, d.base_water_sigma);
    get("day_noise_sigma", c.day_noise_sigma, d.day_noise_sigma);
    get("outlier_prob", c.outlier_prob, d.outlier_prob);
    get("saving_c_elec", c.saving_c_elec, d.saving_c_elec);
    get("saving_c_water", c.saving_c_water, d.saving_c_water);
    get("saving_t1_elec", c.saving_t1_elec, d.saving_t1_elec);
    get("saving_t1_water", c.saving_t1_water, d.saving_t1_water);
    get("t2_net_elec", c.t2_net_elec, d.t2_net_elec);
    get("t2_net_water", c.t2_net_water, d.t2_net_water);
    get("archetype_weights", c.archetype_weights, d.archetype_weights);
    get("archetype_shapes", c.archetype_shapes, d.archetype_shapes);
    get("archetype_tilt", c.archetype_tilt, d.archetype_tilt);
    get("friction_mean", c.friction_mean, d.friction_mean);
    get("friction_sd", c.friction_sd, d.friction_sd);
    get("friction_max", c.friction_max, d.friction_max);
    get("reply_prob_c", c.reply_prob_c, d.reply_prob_c);
    get("reply_prob_t1", c.reply_prob_t1, d.reply_prob_t1);
    get("reply_prob_t2", c.reply_prob_t2, d.reply_prob_t2);
    get("reply_psych_coef", c.reply_psych_coef, d.reply_psych_coef);
    get("reply_archetype_coef", c.reply_archetype_coef, d.reply_archetype_coef);
    get("open_prob", c.open_prob, d.open_prob);
    get("heavy_reporter_share", c.heavy_reporter_share, d.heavy_reporter_share);
    get("heavy_missing_prob", c.heavy_missing_prob, d.heavy_missing_prob);
    get("light_missing_prob", c.light_missing_prob, d.light_missing_prob);
}

inline const std::vector<std::string>& archetype_names() {
    static const std::vector<std::string> names = {"quick_responder", "gradual_adapter",
                                                   "relapse_rebounder", "late_responder",
                                                   "adverse_reactor"};
    return names;
}

// ---------------------------------------------------------------------------
// Population synthesis

struct SynthParticipant {
    ParticipantProfile profile;
    std::string cluster_id;
    int archetype = 0;
    double friction = 0.0;
    double base_elec = 0.0;
    double base_water = 0.0;
    bool heavy_reporter = false;
};

struct Population {
    std::vector<SynthParticipant> participants;
    // cluster id -> member participant ids, in synthesis order
    std::vector<std::pair<std::string, std::vector<std::string>>> clusters;
};

namespace detail {

inline std::string padded_id(const char* prefix, int index, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, index);
    return buf;
}

struct ApplianceCatalogEntry {
    const char* name;
    double prevalence;
};

inline const std::vector<ApplianceCatalogEntry>& appliance_catalog() {
    static const std::vector<ApplianceCatalogEntry> catalog = {
        {"lighting", 1.0},         {"laptop", 0.90},       {"air conditioner", 0.75},
        {"water dispenser", 0.50}, {"fan", 0.45},          {"kettle", 0.35},
        {"desktop computer", 0.30},{"refrigerator", 0.25}, {"heater", 0.20},
        {"television", 0.12},      {"washing machine", 0.10},
    };
    return catalog;
}

inline int sample_archetype(const SimConfig& config, Rng& rng, double psych_z, double budget_z) {
    std::vector<double> weights(config.archetype_weights.size());
    for (std::size_t a = 0; a < weights.size(); ++a) {
        double tilt = a < config.archetype_tilt.size() ? config.archetype_tilt[a] : 0.0;
        weights[a] = config.archetype_weights[a] * std::exp(tilt * (psych_z + budget_z));
    }
    return static_cast<int>(rng.weighted_index(weights));
}

}  // namespace detail

inline Population synth_population(const SimConfig& config, std::uint64_t seed) {
    if (config.n_participants <= 0) throw ValidationError("synth_population: n must be positive");
    if (config.archetype_weights.size() != config.archetype_shapes.size())
        throw ValidationError("synth_population: archetype weights/shapes length mismatch");
    for (const auto& shape : config.archetype_shapes)
        if (static_cast<int>(shape.size()) != config.rounds)
            throw ValidationError("synth_population: archetype shape length != rounds");

    Population pop;
    Rng rng(derive_seed(seed, "population"));

    int assigned = 0, cluster_index = 0;
    while (assigned < config.n_participants) {
        int size = 1 + static_cast<int>(rng.weighted_index(config.cluster_size_weights));
        size = std::min(size, config.n_participants - assigned);
        std::string cluster_id = detail::padded_id("c", ++cluster_index, 3);
        std::vector<std::string> members;
        for (int k = 0; k < size; ++k)
            members.push_back(detail::padded_id("p", assigned + k + 1, 3));
        pop.clusters.emplace_back(cluster_id, members);
        assigned += size;
    }

    const double psych_mean = 3.4, psych_sd = 0.6;
    const double budget_mean = 2.1, budget_sd = 0.7;
    int pid = 0;
    for (const auto& [cluster_id, members] : pop.clusters) {
        for (const auto& member_id : members) {
            ++pid;
            Rng prng(derive_seed(seed, "participant", static_cast<std::uint64_t>(pid)));
            SynthParticipant sp;
            sp.cluster_id = cluster_id;
            ParticipantProfile& p = sp.profile;
            p.participant_id = member_id;
            double psych_avg = prng.truncated_normal(psych_mean, psych_sd, 1.0, 5.0);
            p.psych.self_efficacy = prng.truncated_normal(psych_avg, 0.35, 1.0, 5.0);
            p.psych.outcome_expectations = prng.truncated_normal(psych_avg, 0.35, 1.0, 5.0);
            p.psych.perceived_impediments = prng.truncated_normal(psych_avg, 0.35, 1.0, 5.0);
            p.psych.attitude = prng.truncated_normal(psych_avg, 0.35, 1.0, 5.0);
            p.psych.neighborhood_perception = prng.truncated_normal(psych_avg, 0.35, 1.0, 5.0);
            p.living_budget = prng.truncated_normal(budget_mean, budget_sd, 1.0, 5.0);
            p.gender = prng.bernoulli(0.52) ? Gender::female : Gender::male;
            p.bill_experience = prng.bernoulli(0.35);
            p.appliance_inventory.push_back("lighting");
            for (const auto& entry : detail::appliance_catalog()) {
                if (std::string(entry.name) == "lighting") continue;
                if (prng.bernoulli(entry.prevalence)) p.appliance_inventory.push_back(entry.name);
            }
            p.summary = "";

            double psych_z = (p.mean_psych() - psych_mean) / psych_sd;
            double budget_z = (p.living_budget - budget_mean) / budget_sd;
            sp.archetype = detail::sample_archetype(config, prng, psych_z, budget_z);
            sp.friction = prng.truncated_normal(config.friction_mean, config.friction_sd, 0.0,
                                                config.friction_max);
            sp.base_elec = config.base_elec_mean *
                           prng.lognormal_unit_mean(config.base_elec_sigma);
            sp.base_water = config.base_water_mean *
                            prng.lognormal_unit_mean(config.base_water_sigma);
            sp.heavy_reporter = prng.bernoulli(config.heavy_reporter_share);
            p.validate();
            pop.participants.push_back(std::move(sp));
        }
    }
    return pop;
}

// ---------------------------------------------------------------------------
// Cluster randomization

struct Assignment {
    std::map<std::string, Arm> arm_of_cluster;
    std::map<std::string, Arm> arm_of_participant;
    std::array<int, kNumArms> arm_sizes{};
};

inline Assignment randomize(const Population& pop, std::uint64_t seed) {
    Assignment out;
    std::vector<std::size_t> order(pop.clusters.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "randomize"));
    rng.shuffle(order);
    for (std::size_t idx : order) {
        const auto& [cluster_id, members] = pop.clusters[idx];
        int best = 0;
        for (int a = 1; a < kNumArms; ++a)
            if (out.arm_sizes[a] < out.arm_sizes[best]) best = a;
        Arm arm = static_cast<Arm>(best);
        out.arm_of_cluster[cluster_id] = arm;
        for (const auto& member : members) out.arm_of_participant[member] = arm;
        out.arm_sizes[best] += static_cast<int>(members.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Panel simulation

struct PanelRow {
    std::string participant_id;
    Arm arm = Arm::C;
    std::string cluster_id;
    std::int64_t day = 0;  // absolute civil day
    std::string phase;     // "baseline" | "intervention"
    int round = 0;         // 0 during baseline
    Resource resource = Resource::electricity;
    double value = 0.0;    // NaN when missing
    bool missing = false;
};

struct Panel {
    std::vector<PanelRow> rows;
};

struct EngagementEvent {
    std::string participant_id;
    Arm arm = Arm::C;
    std::string cluster_id;
    int round = 0;
    bool opened = false;       // viewed the weekly report
    bool replied = false;
    double reply_hours = 0.0;  // delay from nudge delivery, replied only
    std::string feedback_text; // replied only
};

struct TrialData {
    Population population;
    Assignment assignment;
    Panel panel;
    std::vector<EngagementEvent> engagement;
    std::int64_t start_day = 0;  // civil day of baseline day 0
};

namespace detail {

struct FeedbackTemplate {
    const char* text;
    bool action;
};

inline const std::vector<FeedbackTemplate>& feedback_pool(int stage) {
    static const std::vector<FeedbackTemplate> early = {
        {"got the report, interesting to see the numbers", false},
        {"thanks for the update", false},
        {"the chart is clear, will take a look this week", false},
        {"I turned off the lights when leaving today", true},
        {"trying a shorter shower this week", true},
    };
    static const std::vector<FeedbackTemplate> middle = {
        {"switched off the water dispenser at night", true},
        {"took a shorter shower most days", true},
        {"set the air conditioner two degrees higher", true},
        {"thanks, the comparison with others is motivating", false},
        {"busy week, did not change much", false},
    };
    static const std::vector<FeedbackTemplate> final_stage = {
        {"unplugged the chargers and turned off the power strip before class", true},
        {"kept showers short and switched off the heater early", true},
        {"reduced the dispenser reboils and turned off the lights", true},
        {"the habit feels natural now, much less standby waste", true},
        {"will keep the shorter shower routine", false},
    };
    if (stage == 0) return early;
    if (stage == 1) return middle;
    return final_stage;
}

inline std::string draw_feedback(Rng& rng, int round, Arm arm) {
    int stage = round <= 2 ? 0 : (round <= 4 ? 1 : 2);
    const auto& pool = feedback_pool(stage);
    double action_weight = stage == 0 ? 0.6 : (stage == 1 ? 1.2 : 2.0);
    if (arm == Arm::T2) action_weight *= 1.6;
    std::vector<double> weights;
    for (const auto& t : pool) weights.push_back(t.action ? action_weight : 1.0);
    return pool[rng.weighted_index(weights)].text;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline TrialData simulate_trial(const Population& pop, const Assignment& assignment,
                                const SimConfig& config, std::uint64_t seed) {
    if (static_cast<int>(config.t2_net_elec.size()) < config.rounds ||
        static_cast<int>(config.t2_net_water.size()) < config.rounds)
        throw ValidationError("simulate_trial: t2 net trajectories shorter than rounds");
    TrialData data;
    data.population = pop;
    data.assignment = assignment;
    data.start_day = parse_iso_date(config.start_date);

    // Mixture-mean-1 normalization of archetype shapes per round.
    std::vector<std::vector<double>> shapes = config.archetype_shapes;
    for (int r = 0; r < config.rounds; ++r) {
        double mix = 0.0, wsum = 0.0;
        for (std::size_t a = 0; a < shapes.size(); ++a) {
            mix += config.archetype_weights[a] * shapes[a][r];
            wsum += config.archetype_weights[a];
        }
        if (wsum <= 0.0) throw ValidationError("simulate_trial: archetype weights sum to zero");
        mix /= wsum;
        if (mix <= 0.0)
            throw ValidationError("simulate_trial: archetype mixture mean not positive in round " +
                                  std::to_string(r + 1));
        for (auto& shape : shapes) shape[r] /= mix;
    }

    data.panel.rows.reserve(static_cast<std::size_t>(pop.participants.size()) *
                            config.total_days() * kResources.size());
    for (std::size_t i = 0; i < pop.participants.size(); ++i) {
        const SynthParticipant& sp = pop.participants[i];
        Arm arm = assignment.arm_of_participant.at(sp.profile.participant_id);
        Rng noise(derive_seed(seed, "panel", static_cast<std::uint64_t>(i)));
        Rng gaps(derive_seed(seed, "missing", static_cast<std::uint64_t>(i)));
        Rng spikes(derive_seed(seed, "outlier", static_cast<std::uint64_t>(i)));
        double miss_prob =
            sp.heavy_reporter ? config.heavy_missing_prob : config.light_missing_prob;

        for (int d = 0; d < config.total_days(); ++d) {
            bool baseline = d < config.baseline_days;
            int round = baseline ? 0 : (d - config.baseline_days) / config.round_length_days + 1;
            for (Resource resource : kResources) {
                double base =
                    resource == Resource::electricity ? sp.base_elec : sp.base_water;
                double effect = 0.0;
                if (!baseline) {
                    int r = round - 1;
                    if (arm == Arm::C) {
                        effect = resource == Resource::electricity ? config.saving_c_elec
                                                                   : config.saving_c_water;
                    } else if (arm == Arm::T1) {
                        effect = resource == Resource::electricity ? config.saving_t1_elec
                                                                   : config.saving_t1_water;
                    } else {
                        double net = resource == Resource::electricity
                                         ? config.t2_net_elec[r]
                                         : config.t2_net_water[r];
                        net *= shapes[sp.archetype][r];
                        if (resource == Resource::hot_water && round >= 2)
                            net *= (1.0 - sp.friction) / (1.0 - config.friction_mean);
                        effect = (resource == Resource::electricity ? config.saving_c_elec
                                                                    : config.saving_c_water) +
                                 net;
                    }
                    effect = std::min(effect, 0.9);
                }
                double value = base * noise.lognormal_unit_mean(config.day_noise_sigma) *
                               (1.0 - effect);
                if (spikes.bernoulli(config.outlier_prob))
                    value *= 4.0 + 4.0 * spikes.uniform();
                PanelRow row;
                row.participant_id = sp.profile.participant_id;
                row.arm = arm;
                row.cluster_id = sp.cluster_id;
                row.day = data.start_day + d;
                row.phase = baseline ? "baseline" : "intervention";
                row.round = round;
                row.resource = resource;
                row.missing = gaps.bernoulli(miss_prob);
                row.value = row.missing ? std::numeric_limits<double>::quiet_NaN() : value;
                data.panel.rows.push_back(std::move(row));
            }
        }

        // Engagement: one potential reply per round.
        Rng engage(derive_seed(seed, "engage", static_cast<std::uint64_t>(i)));
        double base_prob = arm == Arm::C ? config.reply_prob_c
                                         : (arm == Arm::T1 ? config.reply_prob_t1
                                                           : config.reply_prob_t2);
        double logit = std::log(base_prob / (1.0 - base_prob));
        logit += config.reply_psych_coef * (sp.profile.mean_psych() - 3.4);
        if (!config.archetype_tilt.empty())
            logit += config.reply_archetype_coef * config.archetype_tilt[sp.archetype];
        double prob = detail::sigmoid(logit);
        for (int round = 1; round <= config.rounds; ++round) {
            EngagementEvent ev;
            ev.participant_id = sp.profile.participant_id;
            ev.arm = arm;
            ev.cluster_id = sp.cluster_id;
            ev.round = round;
            ev.replied = engage.bernoulli(prob);
            bool opened_anyway = engage.bernoulli(config.open_prob);
            ev.opened = ev.replied || opened_anyway;
            if (ev.replied) {
                ev.reply_hours = 0.5 + 59.5 * engage.uniform();
                ev.feedback_text = detail::draw_feedback(engage, round, arm);
            }
            data.engagement.push_back(std::move(ev));
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Cleaning

struct CleanConfig {
    double iqr_multiplier = 3.0;
    double max_missing_share = 0.40;
};

struct ExclusionReport {
    // arm x resource -> counts
    struct Cell {
        int excluded = 0;
        int kept = 0;
    };
    std::map<Arm, std::map<Resource, Cell>> cells;
    std::map<Resource, int> flagged_observations;
    std::map<Resource, double> upper_fence;
};

struct CleanResult {
    Panel panel;  // flagged observations have missing=true, value retained
    std::map<Resource, std::set<std::string>> excluded;  // per-resource participant ids
    ExclusionReport report;
};

namespace detail {

// Linear-interpolation quartile (the common type-7 convention).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ValidationError("quantile: empty sample");
    if (sorted.size() == 1) return sorted[0];
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo >= sorted.size() - 1) return sorted.back();
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

inline CleanResult clean_panel(const Panel& panel, const CleanConfig& config = {}) {
    CleanResult result;
    result.panel = panel;

    // Observation-level fences from all recorded values, flags ignored, so a
    // second pass reproduces the same fences and the cleaning is idempotent.
    for (Resource resource : kResources) {
        std::vector<double> values;
        for (const auto& row : result.panel.rows)
            if (row.resource == resource && std::isfinite(row.value)) values.push_back(row.value);
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        double q1 = detail::quantile_sorted(values, 0.25);
        double q3 = detail::quantile_sorted(values, 0.75);
        double fence = q3 + config.iqr_multiplier * (q3 - q1);
        result.report.upper_fence[resource] = fence;
        int flagged = 0;
        for (auto& row : result.panel.rows) {
            if (row.resource != resource || !std::isfinite(row.value)) continue;
            if (row.value > fence) {
                if (!row.missing) ++flagged;
                row.missing = true;  // value retained for audit
            }
        }
        result.report.flagged_observations[resource] = flagged;
    }

    // Participant-level exclusion: too many invalid intervention days.
    struct Key {
        std::string id;
        Resource resource;
        bool operator<(const Key& o) const {
            return id != o.id ? id < o.id : resource < o.resource;
        }
    };
    std::map<Key, std::pair<int, int>> tally;  // (invalid, total) intervention days
    std::map<std::string, Arm> arm_of;
    for (const auto& row : result.panel.rows) {
        arm_of[row.participant_id] = row.arm;
        if (row.phase != "intervention") continue;
        auto& [invalid, total] = tally[{row.participant_id, row.resource}];
        ++total;
        if (row.missing) ++invalid;
    }
    for (const auto& [key, counts] : tally) {
        const auto& [invalid, total] = counts;
        bool drop = total == 0 ||
                    static_cast<double>(invalid) > config.max_missing_share * total;
        auto& cell = result.report.cells[arm_of[key.id]][key.resource];
        if (drop) {
            result.excluded[key.resource].insert(key.id);
            ++cell.excluded;
        } else {
            ++cell.kept;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Panel CSV

inline const std::vector<std::string>& panel_header() {
    static const std::vector<std::string> header = {
        "participant_id", "arm", "cluster_id", "date", "phase",
        "round",          "resource", "value", "missing"};
    return header;
}

inline void write_panel_csv(const Panel& panel, const std::string& path) {
    CsvWriter writer(path);
    writer.row(panel_header());
    for (const auto& row : panel.rows) {
        writer.row({row.participant_id, to_string(row.arm), row.cluster_id,
                    format_iso_date(row.day), row.phase, std::to_string(row.round),
                    to_string(row.resource),
                    std::isfinite(row.value) ? format_double(row.value) : std::string(),
                    row.missing ? "1" : "0"});
    }
}

inline Panel read_panel_csv(const std::string& path) {
    CsvTable table = read_csv(path);
    if (table.header != panel_header())
        throw ParseError("panel csv " + path + ": unexpected header");
    Panel panel;
    panel.rows.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& cells = table.rows[i];
        if (cells.size() != panel_header().size())
            throw ParseError("panel csv " + path + ": bad column count at line " +
                             std::to_string(i + 2));
        PanelRow row;
        row.participant_id = cells[0];
        row.arm = arm_from_string(cells[1]);
        row.cluster_id = cells[2];
        row.day = parse_iso_date(cells[3]);
        row.phase = cells[4];
        row.round = std::stoi(cells[5]);
        row.resource = resource_from_string(cells[6]);
        row.missing = cells[8] == "1";
        row.value = cells[7].empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : std::stod(cells[7]);
        panel.rows.push_back(std::move(row));
    }
    return panel;
}

}  // namespace nudgekit
