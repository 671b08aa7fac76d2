#pragma once
// Panel-level analyses: participant samples from the cleaned panel, adjusted
// fits with contrasts and saving rates, pooled standardized models,
// permutation inference, person-week fixed effects, engagement and survival,
// cumulative trajectories, archetype shares, ITE tables, and predictor
// importance inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nudgekit/common.hpp"
#include "nudgekit/hte_meta.hpp"
#include "nudgekit/predictors.hpp"
#include "nudgekit/profile.hpp"
#include "nudgekit/stats_core.hpp"
#include "nudgekit/trajectory_cluster.hpp"
#include "nudgekit/trial_sim.hpp"

namespace nudgekit {

// ---------------------------------------------------------------------------
// Participant-level analytic sample

struct ParticipantSample {
    std::string participant_id;
    std::string cluster_id;
    Arm arm = Arm::C;
    double baseline_mean = 0.0;
    double outcome_mean = 0.0;  // mean over valid intervention days, rounds 1..k
    std::array<double, kNumRounds> round_means{};  // NaN where a round has no valid day
    double early_mean = 0.0;  // rounds 1-2
    double late_mean = 0.0;   // rounds 4-5
    bool has_phases = false;
    std::array<double, 5> psych{};
    double psych_mean = 0.0;
    double living_budget = 0.0;
    double gender_female = 0.0;
    double bill_experience = 0.0;
    double appliance_count = 0.0;

    double saving_rate() const { return 1.0 - outcome_mean / baseline_mean; }
};

// One sample row per retained participant with a positive baseline mean and
// at least one valid day in rounds 1..max_round.
inline std::vector<ParticipantSample> build_samples(
    const Panel& cleaned, const std::set<std::string>& excluded,
    const std::map<std::string, const ParticipantProfile*>& profiles, Resource resource,
    int max_round = kNumRounds) {
    struct Acc {
        std::string cluster_id;
        Arm arm = Arm::C;
        double base_sum = 0.0;
        int base_n = 0;
        std::array<double, kNumRounds> round_sum{};
        std::array<int, kNumRounds> round_n{};
    };
    std::map<std::string, Acc> acc;
    for (const auto& row : cleaned.rows) {
        if (row.resource != resource || excluded.count(row.participant_id)) continue;
        auto& a = acc[row.participant_id];
        a.cluster_id = row.cluster_id;
        a.arm = row.arm;
        if (row.missing || !std::isfinite(row.value)) continue;
        if (row.round == 0) {
            a.base_sum += row.value;
            ++a.base_n;
        } else if (row.round >= 1 && row.round <= kNumRounds) {
            a.round_sum[row.round - 1] += row.value;
            ++a.round_n[row.round - 1];
        }
    }

    std::vector<ParticipantSample> out;
    for (const auto& [id, a] : acc) {
        auto pit = profiles.find(id);
        if (pit == profiles.end())
            throw ValidationError("build_samples: no profile for " + id);
        if (a.base_n == 0) continue;
        double base_mean = a.base_sum / a.base_n;
        if (!(base_mean > 0.0)) continue;

        double sum = 0.0;
        int n = 0;
        for (int r = 0; r < max_round && r < kNumRounds; ++r) {
            sum += a.round_sum[r];
            n += a.round_n[r];
        }
        if (n == 0) continue;

        ParticipantSample s;
        s.participant_id = id;
        s.cluster_id = a.cluster_id;
        s.arm = a.arm;
        s.baseline_mean = base_mean;
        s.outcome_mean = sum / n;
        for (int r = 0; r < kNumRounds; ++r)
            s.round_means[r] = a.round_n[r] > 0
                                   ? a.round_sum[r] / a.round_n[r]
                                   : std::numeric_limits<double>::quiet_NaN();
        double early_sum = a.round_sum[0] + a.round_sum[1];
        int early_n = a.round_n[0] + a.round_n[1];
        double late_sum = a.round_sum[3] + a.round_sum[4];
        int late_n = a.round_n[3] + a.round_n[4];
        s.has_phases = early_n > 0 && late_n > 0;
        s.early_mean = early_n > 0 ? early_sum / early_n : 0.0;
        s.late_mean = late_n > 0 ? late_sum / late_n : 0.0;

        const ParticipantProfile& p = *pit->second;
        s.psych = p.psych.as_array();
        s.psych_mean = p.mean_psych();
        s.living_budget = p.living_budget;
        s.gender_female = p.gender == Gender::female ? 1.0 : 0.0;
        s.bill_experience = p.bill_experience ? 1.0 : 0.0;
        s.appliance_count = static_cast<double>(p.appliance_inventory.size());
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Covariate-adjusted fit

inline const std::vector<std::string>& adjusted_design_names() {
    static const std::vector<std::string> names = {
        "intercept",      "arm_T1",        "arm_T2",        "baseline_mean",
        "psych_mean",     "living_budget", "gender_female", "bill_experience"};
    return names;
}

inline Design adjusted_design(const std::vector<ParticipantSample>& samples) {
    Design d;
    auto col = [&](auto&& get) {
        std::vector<double> v;
        v.reserve(samples.size());
        for (const auto& s : samples) v.push_back(get(s));
        return v;
    };
    d.add("intercept", col([](const auto&) { return 1.0; }));
    d.add("arm_T1", col([](const auto& s) { return s.arm == Arm::T1 ? 1.0 : 0.0; }));
    d.add("arm_T2", col([](const auto& s) { return s.arm == Arm::T2 ? 1.0 : 0.0; }));
    d.add("baseline_mean", col([](const auto& s) { return s.baseline_mean; }));
    d.add("psych_mean", col([](const auto& s) { return s.psych_mean; }));
    d.add("living_budget", col([](const auto& s) { return s.living_budget; }));
    d.add("gender_female", col([](const auto& s) { return s.gender_female; }));
    d.add("bill_experience", col([](const auto& s) { return s.bill_experience; }));
    return d;
}

struct AdjustedAnalysis {
    FitResult fit;
    ContrastResult contrasts;
    SavingRates rates;
    int n = 0;
    int n_clusters = 0;
};

inline AdjustedAnalysis fit_adjusted(const std::vector<ParticipantSample>& samples) {
    if (samples.size() < adjusted_design_names().size() + 2)
        throw InsufficientDataError("fit_adjusted: sample too small");
    Design design = adjusted_design(samples);
    std::vector<double> y;
    std::vector<std::string> clusters;
    for (const auto& s : samples) {
        y.push_back(s.outcome_mean);
        clusters.push_back(s.cluster_id);
    }
    AdjustedAnalysis out;
    out.fit = fit_ols(design, y, clusters);
    out.contrasts = arm_contrasts(out.fit);
    std::vector<double> means(design.names.size(), 0.0);
    for (std::size_t j = 0; j < design.names.size(); ++j) {
        for (double v : design.columns[j]) means[j] += v;
        means[j] /= static_cast<double>(samples.size());
    }
    means[0] = 1.0;
    double baseline_mean = 0.0;
    for (const auto& s : samples) baseline_mean += s.baseline_mean;
    baseline_mean /= static_cast<double>(samples.size());
    out.rates = saving_rates(out.fit, means, baseline_mean);
    out.n = out.fit.n;
    out.n_clusters = out.fit.n_clusters;
    return out;
}

// ---------------------------------------------------------------------------
// Pooled standardized model

inline PooledFit pooled_model(const std::vector<ParticipantSample>& elec,
                              const std::vector<ParticipantSample>& water) {
    std::vector<ResourceBlock> blocks;
    auto block_of = [](const std::vector<ParticipantSample>& samples, Resource resource) {
        ResourceBlock b;
        b.resource = resource;
        b.design = adjusted_design(samples);
        for (const auto& s : samples) {
            b.y.push_back(s.outcome_mean);
            b.cluster_ids.push_back(s.participant_id);
        }
        return b;
    };
    if (!elec.empty()) blocks.push_back(block_of(elec, Resource::electricity));
    if (!water.empty()) blocks.push_back(block_of(water, Resource::hot_water));
    if (blocks.empty()) throw InsufficientDataError("pooled_model: no samples");
    return pool_standardized(blocks, {"baseline_mean", "psych_mean", "living_budget"});
}

// ---------------------------------------------------------------------------
// Permutation inference on an arm coefficient

inline PermutationResult permutation_contrast(const std::vector<ParticipantSample>& samples,
                                              const std::string& arm_name, int draws,
                                              std::uint64_t seed) {
    std::map<std::string, Arm> cluster_arm;
    for (const auto& s : samples) cluster_arm[s.cluster_id] = s.arm;
    if (cluster_arm.size() < 2)
        throw InsufficientDataError("permutation_contrast: need at least 2 clusters");
    std::vector<std::pair<std::string, Arm>> cluster_arms(cluster_arm.begin(), cluster_arm.end());

    Design base = adjusted_design(samples);
    std::vector<double> y;
    std::vector<std::string> clusters;
    for (const auto& s : samples) {
        y.push_back(s.outcome_mean);
        clusters.push_back(s.cluster_id);
    }
    int jt1 = base.index_of("arm_T1");
    int jt2 = base.index_of("arm_T2");

    auto statistic = [&](const std::map<std::string, Arm>& arms) {
        Design d = base;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            Arm a = arms.at(samples[i].cluster_id);
            d.columns[jt1][i] = a == Arm::T1 ? 1.0 : 0.0;
            d.columns[jt2][i] = a == Arm::T2 ? 1.0 : 0.0;
        }
        FitResult fit = fit_ols(d, y, clusters);
        return fit.coef_of(arm_name);
    };
    return permutation_test(cluster_arms, statistic, draws, seed);
}

// ---------------------------------------------------------------------------
// Person-week fixed effects (difference in differences against C)

inline FEResult fe_difference_in_differences(const Panel& cleaned,
                                             const std::set<std::string>& excluded,
                                             Resource resource) {
    std::int64_t first_day = 0;
    bool have_day = false;
    for (const auto& row : cleaned.rows) {
        if (!have_day || row.day < first_day) first_day = row.day;
        have_day = true;
    }
    if (!have_day) throw InsufficientDataError("panel_fe: empty panel");

    struct Key {
        std::string id;
        int week;
        bool operator<(const Key& o) const { return id != o.id ? id < o.id : week < o.week; }
    };
    struct Cell {
        double sum = 0.0;
        int n = 0;
        Arm arm = Arm::C;
        bool post = false;
    };
    std::map<Key, Cell> cells;
    for (const auto& row : cleaned.rows) {
        if (row.resource != resource || excluded.count(row.participant_id)) continue;
        if (row.missing || !std::isfinite(row.value)) continue;
        int week = static_cast<int>((row.day - first_day) / 7);
        auto& cell = cells[{row.participant_id, week}];
        cell.sum += row.value;
        ++cell.n;
        cell.arm = row.arm;
        cell.post = row.phase == "intervention";
    }

    std::vector<FEPanelRow> rows;
    for (const auto& [key, cell] : cells) {
        FEPanelRow row;
        row.unit = key.id;
        row.time = key.week;
        row.y = cell.sum / cell.n;
        double post = cell.post ? 1.0 : 0.0;
        row.x = {post * (cell.arm == Arm::T1 ? 1.0 : 0.0),
                 post * (cell.arm == Arm::T2 ? 1.0 : 0.0)};
        rows.push_back(std::move(row));
    }
    return panel_fe(rows, {"t1_post", "t2_post"});
}

// ---------------------------------------------------------------------------
// Engagement

struct EngagementRates {
    std::array<int, kNumArms> engaged{};
    std::array<int, kNumArms> total{};
    std::array<double, kNumArms> rate{};
};

// Engaged = opened at least one weekly report AND replied at least once.
inline EngagementRates engagement_rate(const std::vector<EngagementEvent>& events,
                                       const std::map<std::string, Arm>& arm_of) {
    EngagementRates out;
    for (const auto& [id, arm] : arm_of) ++out.total[static_cast<int>(arm)];
    std::map<std::string, std::pair<bool, bool>> seen;  // opened, replied
    for (const auto& ev : events) {
        auto& [opened, replied] = seen[ev.participant_id];
        opened = opened || ev.opened;
        replied = replied || ev.replied;
    }
    for (const auto& [id, flags] : seen) {
        auto it = arm_of.find(id);
        if (it == arm_of.end()) continue;
        if (flags.first && flags.second) ++out.engaged[static_cast<int>(it->second)];
    }
    for (int a = 0; a < kNumArms; ++a)
        out.rate[a] = out.total[a] > 0
                          ? static_cast<double>(out.engaged[a]) / out.total[a]
                          : 0.0;
    return out;
}

// Survival to sustained engagement: the event is the first round whose nudge
// got no reply within the 48-hour window; participants replying on time in
// every round are censored at the final round.
inline std::map<Arm, std::vector<KMPoint>> km_survival(
    const std::vector<EngagementEvent>& events, double window_hours = 48.0) {
    struct Track {
        Arm arm = Arm::C;
        std::map<int, bool> timely;  // round -> replied within window
    };
    std::map<std::string, Track> tracks;
    int max_round = 0;
    for (const auto& ev : events) {
        auto& track = tracks[ev.participant_id];
        track.arm = ev.arm;
        track.timely[ev.round] = ev.replied && ev.reply_hours <= window_hours;
        max_round = std::max(max_round, ev.round);
    }
    std::map<Arm, std::vector<std::pair<double, bool>>> observations;
    for (const auto& [id, track] : tracks) {
        double time = max_round;
        bool event = false;
        for (const auto& [round, timely] : track.timely) {
            if (!timely) {
                time = round;
                event = true;
                break;
            }
        }
        observations[track.arm].emplace_back(time, event);
    }
    std::map<Arm, std::vector<KMPoint>> out;
    for (const auto& [arm, obs] : observations) out[arm] = km_curve(obs);
    return out;
}

// ---------------------------------------------------------------------------
// Cumulative trajectories (net-of-control saving rates by round)

struct TrajectoryPoint {
    int through_round = 0;
    std::array<double, kNumArms> rate{};
    double net_t1 = 0.0;
    double net_t2 = 0.0;
    int n = 0;
};

inline std::vector<TrajectoryPoint> cumulative_trajectory(
    const Panel& cleaned, const std::set<std::string>& excluded,
    const std::map<std::string, const ParticipantProfile*>& profiles, Resource resource,
    int max_round = kNumRounds) {
    std::vector<TrajectoryPoint> out;
    for (int k = 1; k <= max_round; ++k) {
        auto samples = build_samples(cleaned, excluded, profiles, resource, k);
        AdjustedAnalysis a = fit_adjusted(samples);
        TrajectoryPoint tp;
        tp.through_round = k;
        tp.rate = a.rates.rate;
        tp.net_t1 = a.rates.rate[1] - a.rates.rate[0];
        tp.net_t2 = a.rates.rate[2] - a.rates.rate[0];
        tp.n = a.n;
        out.push_back(tp);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Archetype shares (T2 trajectory clustering)

struct ArchetypeShareTable {
    Resource resource = Resource::electricity;
    int clustered = 0;
    int excluded_constant = 0;
    int skipped_incomplete = 0;  // missing baseline or a round mean
    std::map<Archetype, int> counts;
    std::map<Archetype, double> shares;
    std::vector<ArchetypeAssignment> assignments;
};

inline ArchetypeShareTable archetype_shares(const std::vector<ParticipantSample>& samples,
                                            Resource resource,
                                            const ArchetypeConfig& config = {}) {
    ArchetypeShareTable out;
    out.resource = resource;
    std::vector<Trajectory> trajectories;
    for (const auto& s : samples) {
        if (s.arm != Arm::T2) continue;
        bool complete = true;
        for (double v : s.round_means) complete = complete && std::isfinite(v);
        if (!complete || !(s.baseline_mean > 0.0)) {
            ++out.skipped_incomplete;
            continue;
        }
        trajectories.push_back(make_trajectory(s.participant_id, s.baseline_mean, s.round_means));
    }
    if (trajectories.empty())
        throw InsufficientDataError("archetype_shares: no complete T2 trajectories");
    ArchetypeResult labeled = label_archetypes(trajectories, config);
    out.assignments = labeled.assignments;
    out.excluded_constant = static_cast<int>(labeled.excluded.size());
    out.clustered = static_cast<int>(labeled.assignments.size());
    for (const auto& a : labeled.assignments) ++out.counts[a.archetype];
    for (const auto& [archetype, count] : out.counts)
        out.shares[archetype] = static_cast<double>(count) / out.clustered;
    return out;
}

// ---------------------------------------------------------------------------
// ITE tables

struct IteTable {
    Resource resource = Resource::electricity;
    Arm treatment = Arm::T2;
    std::vector<std::string> ids;
    std::vector<std::string> feature_names;
    IteResult ites;
    std::vector<QuartileRow> top_quartile;
};

inline const std::vector<std::string>& ite_feature_names() {
    static const std::vector<std::string> names = {
        "baseline_mean", "self_efficacy",  "outcome_expectations",
        "perceived_impediments", "attitude", "neighborhood_perception",
        "living_budget", "gender_female", "bill_experience", "appliance_count"};
    return names;
}

inline std::vector<double> ite_features(const ParticipantSample& s) {
    return {s.baseline_mean, s.psych[0], s.psych[1], s.psych[2], s.psych[3], s.psych[4],
            s.living_budget, s.gender_female, s.bill_experience, s.appliance_count};
}

// One-vs-control ITEs on participant saving rates. Negative tau on raw
// consumption corresponds to larger savings, so the outcome here is the
// saving rate with sign flipped (tau < 0 = stronger saving response keeps
// the convention used by top_quartile_profile).
inline IteTable ite_analysis(const std::vector<ParticipantSample>& samples, Resource resource,
                             Arm treatment, const HteConfig& config, std::uint64_t seed) {
    if (treatment == Arm::C) throw ValidationError("ite_analysis: treatment must be T1 or T2");
    IteTable out;
    out.resource = resource;
    out.treatment = treatment;
    out.feature_names = ite_feature_names();

    FeatureMatrix X;
    std::vector<double> y;
    std::vector<int> treated;
    for (const auto& s : samples) {
        if (s.arm != Arm::C && s.arm != treatment) continue;
        out.ids.push_back(s.participant_id);
        X.push_back(ite_features(s));
        y.push_back(-s.saving_rate());
        treated.push_back(s.arm == treatment ? 1 : 0);
    }
    out.ites = estimate_ites(X, y, treated, out.ids, config,
                             derive_seed(seed, std::string("ite_") + to_string(resource) + "_" +
                                                   to_string(treatment)));
    out.top_quartile = top_quartile_profile(out.ites.tau_ensemble, X, out.feature_names);
    return out;
}

// ---------------------------------------------------------------------------
// Predictor features for the importance analysis

struct ReplyStats {
    double reply_count = 0.0;
    double mean_reply_length = 0.0;
};

inline std::map<std::string, ReplyStats> reply_stats(
    const std::vector<EngagementEvent>& events) {
    std::map<std::string, ReplyStats> out;
    std::map<std::string, std::pair<int, double>> acc;  // replies, total chars
    std::set<std::string> all_ids;
    for (const auto& ev : events) {
        all_ids.insert(ev.participant_id);
        if (!ev.replied) continue;
        auto& [n, chars] = acc[ev.participant_id];
        ++n;
        chars += static_cast<double>(ev.feedback_text.size());
    }
    for (const auto& id : all_ids) out[id] = {};
    for (const auto& [id, cell] : acc) {
        out[id].reply_count = cell.first;
        out[id].mean_reply_length = cell.first > 0 ? cell.second / cell.first : 0.0;
    }
    return out;
}

inline std::vector<PredictorSpec> predictor_specs() {
    return {
        {"baseline_mean", "baseline_consumption"},
        {"self_efficacy", "psychological"},
        {"outcome_expectations", "psychological"},
        {"perceived_impediments", "psychological"},
        {"attitude", "psychological"},
        {"neighborhood_perception", "psychological"},
        {"living_budget", "socio_structural"},
        {"gender_female", "socio_structural"},
        {"bill_experience", "socio_structural"},
        {"appliance_count", "socio_structural"},
        {"nudge_type", "intervention_related"},
        {"chatbot_use_frequency", "intervention_related"},
        {"average_chat_length", "intervention_related"},
    };
}

struct PredictorData {
    std::vector<std::string> ids;
    FeatureMatrix X;
    std::vector<double> y_overall;  // saving rate, rounds 1..5
    std::vector<double> y_early;    // rounds 1-2
    std::vector<double> y_late;     // rounds 4-5
};

inline PredictorData predictor_data(const std::vector<ParticipantSample>& samples,
                                    const std::map<std::string, ReplyStats>& replies,
                                    int rounds = kNumRounds) {
    PredictorData out;
    for (const auto& s : samples) {
        if (!s.has_phases) continue;
        ReplyStats rs;
        auto it = replies.find(s.participant_id);
        if (it != replies.end()) rs = it->second;
        out.ids.push_back(s.participant_id);
        out.X.push_back({s.baseline_mean, s.psych[0], s.psych[1], s.psych[2], s.psych[3],
                         s.psych[4], s.living_budget, s.gender_female, s.bill_experience,
                         s.appliance_count, static_cast<double>(static_cast<int>(s.arm)),
                         rs.reply_count / static_cast<double>(rounds), rs.mean_reply_length});
        out.y_overall.push_back(s.saving_rate());
        out.y_early.push_back(1.0 - s.early_mean / s.baseline_mean);
        out.y_late.push_back(1.0 - s.late_mean / s.baseline_mean);
    }
    return out;
}

}  // namespace nudgekit
