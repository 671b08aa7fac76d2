#pragma once
// Three-stage nudge generation: usage feedback, suggestion selection, and
// quantified scenarios, assembled into per-arm bundles and safety-screened.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nudgekit/backend.hpp"
#include "nudgekit/common.hpp"
#include "nudgekit/knowledge_base.hpp"
#include "nudgekit/profile.hpp"
#include "nudgekit/rng.hpp"

namespace nudgekit {

constexpr double kWeeksPerMonth = 365.25 / 12.0 / 7.0;

// ---------------------------------------------------------------------------
// Stage 1: usage feedback

struct UsageFeedback {
    Resource resource = Resource::electricity;
    double total_since_last = 0.0;
    Trend trend = Trend::flat;
    double percent_change = 0.0;  // second half vs first half of the window
    double peer_ratio = 1.0;      // own daily mean / peer daily mean
    std::vector<std::pair<std::string, double>> appliance_breakdown;  // shares sum to 1
};

inline double appliance_weight(const std::string& name) {
    static const std::map<std::string, double> table = {
        {"air conditioner", 4.0}, {"space heater", 3.0},   {"heater", 3.0},
        {"desktop computer", 2.0}, {"refrigerator", 1.5},  {"water dispenser", 1.2},
        {"lighting", 1.2},         {"laptop", 1.0},        {"washing machine", 1.0},
        {"kettle", 0.8},           {"television", 0.8},    {"fan", 0.6},
    };
    auto it = table.find(to_lower(name));
    return it == table.end() ? 0.5 : it->second;
}

inline std::vector<std::pair<std::string, double>> appliance_breakdown(
    const ParticipantProfile& profile, Resource resource) {
    std::vector<std::pair<std::string, double>> shares;
    if (resource == Resource::hot_water) {
        shares.emplace_back("shower", 1.0);
        return shares;
    }
    double total = 0.0;
    for (const auto& name : profile.appliance_inventory) total += appliance_weight(name);
    if (profile.appliance_inventory.empty() || total <= 0.0) {
        shares.emplace_back("general plug load", 1.0);
        return shares;
    }
    for (const auto& name : profile.appliance_inventory)
        shares.emplace_back(to_lower(name), appliance_weight(name) / total);
    std::sort(shares.begin(), shares.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return shares;
}

namespace detail {

inline std::vector<double> window_values(const ParticipantProfile& p, Resource r,
                                         std::int64_t begin_day, std::int64_t end_day) {
    std::vector<double> values;
    auto it = p.consumption_history.find(r);
    if (it == p.consumption_history.end()) return values;
    for (const auto& obs : it->second)
        if (obs.day >= begin_day && obs.day <= end_day) values.push_back(obs.value);
    return values;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

inline UsageFeedback stage1_usage_feedback(const ParticipantProfile& profile,
                                           const std::vector<ParticipantProfile>& peers,
                                           Resource resource, std::int64_t window_begin,
                                           std::int64_t window_end) {
    auto values = detail::window_values(profile, resource, window_begin, window_end);
    if (values.empty())
        throw InsufficientDataError("stage1: no " + to_string(resource) + " observations for " +
                                    profile.participant_id + " in window");
    UsageFeedback fb;
    fb.resource = resource;
    for (double v : values) fb.total_since_last += v;

    std::size_t half = values.size() / 2;
    std::vector<double> first(values.begin(), values.begin() + half);
    std::vector<double> second(values.begin() + half, values.end());
    double m1 = detail::mean_of(first), m2 = detail::mean_of(second);
    if (first.empty()) {
        fb.trend = Trend::flat;
        fb.percent_change = 0.0;
    } else if (m1 <= 0.0) {
        fb.trend = m2 > 0.0 ? Trend::up : Trend::flat;
        fb.percent_change = m2 > 0.0 ? 100.0 : 0.0;
    } else {
        double rel = (m2 - m1) / m1;
        if (std::fabs(m2 - m1) <= 1e-9 * std::max(1.0, std::fabs(m1))) {
            fb.trend = Trend::flat;
            fb.percent_change = 0.0;
        } else {
            fb.trend = rel > 0.0 ? Trend::up : Trend::down;
            fb.percent_change = rel * 100.0;
        }
    }

    double own_daily = fb.total_since_last / static_cast<double>(values.size());
    double peer_sum = 0.0;
    int peer_count = 0;
    for (const auto& peer : peers) {
        auto pv = detail::window_values(peer, resource, window_begin, window_end);
        if (pv.empty()) continue;
        peer_sum += detail::mean_of(pv);
        ++peer_count;
    }
    double peer_mean = peer_count > 0 ? peer_sum / peer_count : 0.0;
    fb.peer_ratio = peer_mean > 0.0 ? own_daily / peer_mean : 1.0;

    fb.appliance_breakdown = appliance_breakdown(profile, resource);
    return fb;
}

// ---------------------------------------------------------------------------
// Stage 3: quantified scenarios

struct AnalogyBracket {
    double quantity = 0.0;
    std::string prose;
};

using AnalogyTable = std::map<Resource, std::vector<AnalogyBracket>>;

inline AnalogyTable analogy_table_from_json(const nlohmann::json& j) {
    AnalogyTable table;
    for (auto it = j.begin(); it != j.end(); ++it) {
        Resource r = resource_from_string(it.key());
        std::vector<AnalogyBracket> brackets;
        for (const auto& row : it.value())
            brackets.push_back({row.at("quantity").get<double>(),
                                row.at("prose").get<std::string>()});
        std::sort(brackets.begin(), brackets.end(),
                  [](const AnalogyBracket& a, const AnalogyBracket& b) {
                      return a.quantity < b.quantity;
                  });
        if (brackets.empty())
            throw ValidationError("analogy table: empty bracket list for " + it.key());
        table[r] = std::move(brackets);
    }
    return table;
}

inline std::string pick_analogy(const AnalogyTable& table, Resource resource, double estimate) {
    auto it = table.find(resource);
    if (it == table.end() || it->second.empty())
        throw ValidationError("analogy table: no brackets for " + to_string(resource));
    const auto& brackets = it->second;
    const AnalogyBracket* chosen = &brackets.front();
    for (const auto& b : brackets)
        if (b.quantity <= estimate) chosen = &b;
    return chosen->prose;
}

struct Stage3Params {
    double shower_duration_delta_min = 0.5;
    double elec_duration_delta_min_per_day = 30.0;
    double frequency_events_removed_per_week = 1.0;
    double temperature_fraction = 0.06;
};

struct QuantScenario {
    std::string suggestion_id;
    std::string suggestion_text;
    std::string behavior_delta;
    bool has_estimate = false;
    double estimated_saving = 0.0;  // per month, rounded to 2 significant figures
    std::string saving_unit;
    std::string analogy;
    bool approximate_flag = true;
    std::string prose;
};

namespace detail {

inline std::string format_estimate(double value) {
    double r = std::round(value);
    if (std::fabs(value - r) < 1e-9 && std::fabs(value) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", r);
        return buf;
    }
    return format_double(value);
}

}  // namespace detail

inline QuantScenario stage3_quantify(const SuggestionRecord& suggestion,
                                     const ParticipantProfile& profile,
                                     const AnalogyTable& analogies,
                                     const Stage3Params& params = {}) {
    QuantScenario sc;
    sc.suggestion_id = suggestion.id;
    sc.suggestion_text = suggestion.text;
    sc.approximate_flag = true;
    const UsageParams& u = profile.usage;
    const bool water = suggestion.resource == Resource::hot_water;
    sc.saving_unit = water ? "L of hot water" : "kWh of electricity";

    double raw = -1.0;  // <0 marks the qualitative fallback
    switch (suggestion.strategy) {
        case Strategy::duration_control:
            if (water) {
                sc.behavior_delta = "shorten each shower by about " +
                                    detail::format_estimate(params.shower_duration_delta_min * 60) +
                                    " seconds";
                raw = params.shower_duration_delta_min * u.shower_flow_lpm *
                      (u.showers_per_week * kWeeksPerMonth);
            } else {
                sc.behavior_delta = "trim about " +
                                    detail::format_estimate(params.elec_duration_delta_min_per_day) +
                                    " minutes from daily " + suggestion.appliance + " time";
                raw = params.elec_duration_delta_min_per_day * (u.appliance_kwh_per_hour / 60.0) *
                      (365.25 / 12.0);
            }
            break;
        case Strategy::frequency_reduction:
            if (water) {
                sc.behavior_delta = "skip about one shower per week";
                raw = params.frequency_events_removed_per_week *
                      (u.shower_minutes * u.shower_flow_lpm) * kWeeksPerMonth;
            } else {
                sc.behavior_delta = "drop about one " + suggestion.appliance + " session per week";
                raw = params.frequency_events_removed_per_week *
                      (u.appliance_hours_per_week / 7.0) * u.appliance_kwh_per_hour *
                      kWeeksPerMonth;
            }
            break;
        case Strategy::temperature_adjustment:
            if (water) {
                sc.behavior_delta = "set the shower a couple of degrees cooler";
                raw = params.temperature_fraction *
                      (u.shower_minutes * u.shower_flow_lpm * u.showers_per_week *
                       kWeeksPerMonth);
            } else {
                sc.behavior_delta = "run the " + suggestion.appliance +
                                    " a couple of degrees closer to the room";
                raw = params.temperature_fraction *
                      (u.appliance_hours_per_week * kWeeksPerMonth * u.appliance_kwh_per_hour);
            }
            break;
        default:
            break;  // behavior_mode_change / monitoring_feedback stay qualitative
    }

    if (raw < 0.0) {
        sc.has_estimate = false;
        sc.behavior_delta = "adopt the suggested routine change";
        sc.prose = "Savings here depend on how consistently the new habit replaces the old "
                   "one, so no single number fits; approximately steady adherence typically "
                   "shows up on the next usage report.";
        return sc;
    }

    sc.has_estimate = true;
    sc.estimated_saving = round_sig(raw, 2);
    sc.analogy = pick_analogy(analogies, suggestion.resource, sc.estimated_saving);
    sc.prose = "If you " + sc.behavior_delta + ", that saves approximately " +
               detail::format_estimate(sc.estimated_saving) + " " + sc.saving_unit +
               " per month, " + sc.analogy + ".";
    return sc;
}

// ---------------------------------------------------------------------------
// Bundles

struct NudgeBundle {
    std::string participant_id;
    int round = 0;
    Arm arm = Arm::C;
    BundleFormat format = BundleFormat::text_link;
    std::string generic_text;  // control arm only
    std::vector<UsageFeedback> feedback;
    std::map<Resource, std::vector<SuggestionRecord>> suggestions;
    std::map<Resource, std::vector<QuantScenario>> scenarios;
    std::string new_summary;
};

inline void validate_bundle(const NudgeBundle& bundle) {
    auto fail = [&](const std::string& what) {
        throw AssemblyError("bundle for " + bundle.participant_id + " round " +
                            std::to_string(bundle.round) + ": " + what);
    };
    if (bundle.round < 1 || bundle.round > kNumRounds) fail("round out of range");
    switch (bundle.arm) {
        case Arm::C:
            if (bundle.format != BundleFormat::text_link) fail("control arm must use text_link");
            if (bundle.generic_text.empty()) fail("control arm needs generic reminder text");
            if (!bundle.feedback.empty()) fail("control arm carries no usage feedback");
            if (!bundle.suggestions.empty() || !bundle.scenarios.empty())
                fail("control arm carries no suggestions");
            if (!bundle.new_summary.empty()) fail("control arm carries no summary");
            break;
        case Arm::T1:
            if (bundle.format != BundleFormat::image_report) fail("T1 must use image_report");
            if (bundle.feedback.size() != kResources.size()) fail("T1 needs per-resource feedback");
            if (!bundle.suggestions.empty() || !bundle.scenarios.empty())
                fail("T1 carries no suggestions");
            if (!bundle.new_summary.empty()) fail("T1 carries no summary");
            break;
        case Arm::T2: {
            if (bundle.format != BundleFormat::image_report) fail("T2 must use image_report");
            if (bundle.feedback.size() != kResources.size()) fail("T2 needs per-resource feedback");
            if (bundle.new_summary.empty()) fail("T2 needs an updated summary");
            for (Resource r : kResources) {
                auto sit = bundle.suggestions.find(r);
                if (sit == bundle.suggestions.end() || sit->second.size() != 2)
                    fail("T2 needs exactly two suggestions for " + to_string(r));
                auto cit = bundle.scenarios.find(r);
                if (cit == bundle.scenarios.end() || cit->second.size() != 2)
                    fail("T2 needs exactly one scenario per suggestion for " + to_string(r));
                for (std::size_t i = 0; i < 2; ++i) {
                    if (cit->second[i].suggestion_id != sit->second[i].id)
                        fail("scenario/suggestion pairing mismatch for " + to_string(r));
                    if (sit->second[i].resource != r) fail("suggestion resource mismatch");
                }
            }
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Stage 2: selection

struct Stage2Result {
    std::map<Resource, std::vector<SuggestionRecord>> selected;     // two per resource
    std::map<Resource, std::vector<SuggestionRecord>> pool_ranked;  // full ranked pool
    std::string new_summary;
};

namespace detail {

inline std::vector<std::string> behavior_tags_for(const ParticipantProfile& profile,
                                                  Resource resource) {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"air conditioner", {"cooling"}},   {"space heater", {"heating"}},
        {"heater", {"heating"}},            {"desktop computer", {"electronics"}},
        {"laptop", {"electronics"}},        {"refrigerator", {"refrigeration"}},
        {"lighting", {"lighting"}},         {"water dispenser", {"heating", "drinking"}},
        {"kettle", {"heating", "drinking"}},{"washing machine", {"laundry"}},
        {"television", {"electronics"}},    {"fan", {"cooling"}},
    };
    std::vector<std::string> tags;
    auto add = [&](const std::string& t) {
        if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
    };
    if (resource == Resource::hot_water) {
        add("showering");
        add("bathing");
    } else {
        for (const auto& name : profile.appliance_inventory) {
            auto it = table.find(to_lower(name));
            if (it != table.end())
                for (const auto& t : it->second) add(t);
        }
        add("usage scheduling");
        add("standby habits");
    }
    return tags;
}

inline ProfileQuery build_query(const ParticipantProfile& profile, Resource resource) {
    ProfileQuery q;
    q.appliances = profile.appliance_inventory;
    if (resource == Resource::hot_water) q.appliances.push_back("shower");
    q.behavior_tags = behavior_tags_for(profile, resource);
    q.summary_keywords = tokenize(profile.summary, false);
    return q;
}

inline nlohmann::json shares_json(const std::vector<std::pair<std::string, double>>& shares) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [name, share] : shares) j.push_back({name, share});
    return j;
}

inline std::vector<SuggestionRecord> parse_generated(const nlohmann::json& arr,
                                                     Resource resource) {
    std::vector<SuggestionRecord> out;
    for (const auto& item : arr) {
        SuggestionRecord rec;
        rec.id = item.at("id").get<std::string>();
        rec.behavior_type = item.at("behavior_type").get<std::string>();
        rec.appliance = item.at("appliance").get<std::string>();
        rec.strategy = strategy_from_string(item.at("strategy").get<std::string>());
        rec.resource = resource;
        rec.text = item.at("text").get<std::string>();
        if (rec.text.empty()) throw ValidationError("generated suggestion has empty text");
        out.push_back(std::move(rec));
    }
    return out;
}

// Ids delivered in the immediately preceding round; ids are unique across
// resources, so one ban list serves both.
inline std::vector<std::string> previous_round_ids(const ParticipantProfile& profile, int round) {
    std::vector<std::string> ids;
    for (const auto& d : profile.prior_suggestions)
        if (d.round == round - 1) ids.push_back(d.suggestion);
    return ids;
}

}  // namespace detail

inline Stage2Result stage2_select(const SuggestionLibrary& library, GenerationBackend& backend,
                                  const ParticipantProfile& profile,
                                  const std::vector<UsageFeedback>& feedback, int round,
                                  std::uint64_t seed) {
    Stage2Result result;
    for (Resource resource : kResources) {
        const UsageFeedback* fb = nullptr;
        for (const auto& f : feedback)
            if (f.resource == resource) fb = &f;
        if (!fb) throw ValidationError("stage2: missing stage-1 feedback for " +
                                       to_string(resource));

        // Retrieval goes deeper than the two slots so the ranked pool can
        // absorb repeat bans and safety replacements without running dry.
        auto query = detail::build_query(profile, resource);
        auto retrieved = retrieve_top_k(library, query, resource, 8);
        if (retrieved.size() < 2)
            throw PoolUnderfullError("stage2: library yields " +
                                     std::to_string(retrieved.size()) + " " +
                                     to_string(resource) + " candidates, need 2");

        BackendRequest gen_req;
        gen_req.task = "generate";
        gen_req.seed = derive_seed(seed, "generate", static_cast<std::uint64_t>(resource));
        gen_req.fields = {{"resource", to_string(resource)},
                          {"appliance_shares", detail::shares_json(fb->appliance_breakdown)},
                          {"summary", profile.summary},
                          {"count", 2}};
        auto generated = detail::parse_generated(
            backend.complete(gen_req).fields.at("suggestions"), resource);
        if (generated.size() < 2)
            throw PoolUnderfullError("stage2: backend produced " +
                                     std::to_string(generated.size()) +
                                     " candidates, need 2");

        std::vector<SuggestionRecord> pool = retrieved;
        for (auto& g : generated) {
            bool dup = false;
            for (const auto& p : pool) dup = dup || p.id == g.id;
            if (!dup) pool.push_back(std::move(g));
        }
        if (pool.size() < 4)
            throw PoolUnderfullError("stage2: candidate pool for " + to_string(resource) +
                                     " has " + std::to_string(pool.size()) + " entries, need 4");

        nlohmann::json cands = nlohmann::json::array();
        for (const auto& p : pool)
            cands.push_back({{"id", p.id},
                             {"strategy", to_string(p.strategy)},
                             {"appliance", p.appliance}});
        BackendRequest rank_req;
        rank_req.task = "rank";
        rank_req.seed = derive_seed(seed, "rank", static_cast<std::uint64_t>(resource));
        rank_req.fields = {{"candidates", cands},
                           {"appliance_shares", detail::shares_json(fb->appliance_breakdown)}};
        auto ranking = backend.complete(rank_req).fields.at("ranking");

        std::vector<SuggestionRecord> ranked;
        for (const auto& id_json : ranking) {
            const std::string id = id_json.get<std::string>();
            for (const auto& p : pool)
                if (p.id == id) ranked.push_back(p);
        }
        for (const auto& p : pool) {
            bool seen = false;
            for (const auto& r : ranked) seen = seen || r.id == p.id;
            if (!seen) ranked.push_back(p);  // backend omissions go to the tail
        }

        auto banned = detail::previous_round_ids(profile, round);
        std::vector<SuggestionRecord> selected;
        for (const auto& r : ranked) {
            if (selected.size() == 2) break;
            if (std::find(banned.begin(), banned.end(), r.id) != banned.end()) continue;
            selected.push_back(r);
        }
        if (selected.size() < 2)
            throw PoolUnderfullError("stage2: repeat exclusion left fewer than 2 candidates "
                                     "for " + to_string(resource));
        result.selected[resource] = std::move(selected);
        result.pool_ranked[resource] = std::move(ranked);
    }

    // Summary refresh from the four guiding questions.
    const UsageFeedback* elec = nullptr;
    const UsageFeedback* water = nullptr;
    for (const auto& f : feedback)
        (f.resource == Resource::electricity ? elec : water) = &f;
    char mp[16], ts[16];
    std::snprintf(mp, sizeof(mp), "%.1f", profile.mean_psych());
    std::snprintf(ts, sizeof(ts), "%.2f", elec->appliance_breakdown.front().second);
    std::vector<int> prior_rounds;
    for (const auto& d : profile.prior_suggestions)
        if (std::find(prior_rounds.begin(), prior_rounds.end(), d.round) == prior_rounds.end())
            prior_rounds.push_back(d.round);
    std::string prior_response =
        elec->trend == Trend::down
            ? "consumption edged down, suggestions appear to land"
            : (elec->trend == Trend::up ? "consumption rose, earlier suggestions had limited "
                                          "traction"
                                        : "consumption held steady");
    std::string feedback_note = "no written feedback yet.";
    if (!profile.feedback_log.empty()) {
        std::string last = profile.feedback_log.back().text;
        if (last.size() > 80) last = last.substr(0, 80);
        feedback_note = "latest note: '" + last + "'.";
    }
    BackendRequest sum_req;
    sum_req.task = "summarize";
    sum_req.seed = derive_seed(seed, "summarize");
    sum_req.fields = {{"top_appliance", elec->appliance_breakdown.front().first},
                      {"top_share", ts},
                      {"elec_trend", to_string(elec->trend)},
                      {"water_trend", to_string(water->trend)},
                      {"mean_psych", mp},
                      {"prior_rounds", static_cast<int>(prior_rounds.size())},
                      {"prior_response", prior_response},
                      {"feedback_note", feedback_note}};
    result.new_summary = backend.complete(sum_req).fields.at("summary").get<std::string>();
    if (result.new_summary.empty())
        throw ValidationError("stage2: backend returned an empty summary");
    return result;
}

// ---------------------------------------------------------------------------
// Safety screen

struct ScreenFlag {
    Resource resource = Resource::electricity;
    std::string removed_id;
    std::string pattern;
    std::string replacement_id;
};

inline std::optional<std::string> deny_match(const std::string& text,
                                             const std::vector<std::string>& deny_patterns) {
    std::string lowered = to_lower(text);
    for (const auto& pattern : deny_patterns)
        if (!pattern.empty() && lowered.find(pattern) != std::string::npos) return pattern;
    return std::nullopt;
}

inline std::vector<ScreenFlag> safety_screen(NudgeBundle& bundle,
                                             const std::map<Resource,
                                                            std::vector<SuggestionRecord>>& pool,
                                             const std::vector<std::string>& deny_patterns,
                                             const ParticipantProfile& profile,
                                             const AnalogyTable& analogies,
                                             const Stage3Params& stage3 = {}) {
    std::vector<ScreenFlag> flags;
    if (bundle.arm != Arm::T2) return flags;
    for (Resource resource : kResources) {
        auto& selected = bundle.suggestions[resource];
        auto& scenarios = bundle.scenarios[resource];
        auto pit = pool.find(resource);
        const auto& ranked = pit == pool.end() ? std::vector<SuggestionRecord>{} : pit->second;
        auto banned = detail::previous_round_ids(profile, bundle.round);
        for (std::size_t i = 0; i < selected.size(); ++i) {
            auto hit = deny_match(selected[i].text, deny_patterns);
            if (!hit) continue;
            ScreenFlag flag;
            flag.resource = resource;
            flag.removed_id = selected[i].id;
            flag.pattern = *hit;
            bool replaced = false;
            for (const auto& cand : ranked) {
                bool in_bundle = false;
                for (const auto& s : selected) in_bundle = in_bundle || s.id == cand.id;
                if (in_bundle) continue;
                if (std::find(banned.begin(), banned.end(), cand.id) != banned.end()) continue;
                if (deny_match(cand.text, deny_patterns)) continue;
                selected[i] = cand;
                scenarios[i] = stage3_quantify(cand, profile, analogies, stage3);
                flag.replacement_id = cand.id;
                replaced = true;
                break;
            }
            if (!replaced)
                throw ScreeningExhaustedError("safety screen: no clean replacement left for " +
                                              flag.removed_id + " (" + to_string(resource) + ")");
            flags.push_back(std::move(flag));
        }
    }
    return flags;
}

// ---------------------------------------------------------------------------
// Assembly and the full per-participant pipeline

inline NudgeBundle assemble_bundle(Arm arm, const ParticipantProfile& profile, int round,
                                   const std::vector<UsageFeedback>& feedback,
                                   const Stage2Result* stage2,
                                   const std::map<Resource, std::vector<QuantScenario>>* scenarios) {
    NudgeBundle bundle;
    bundle.participant_id = profile.participant_id;
    bundle.round = round;
    bundle.arm = arm;
    if (arm == Arm::C) {
        bundle.format = BundleFormat::text_link;
        bundle.generic_text =
            "Saving energy and hot water helps the whole building; see this week's "
            "conservation page for general tips.";
    } else {
        bundle.format = BundleFormat::image_report;
        bundle.feedback = feedback;
        if (arm == Arm::T2) {
            if (!stage2 || !scenarios)
                throw AssemblyError("T2 bundle needs stage-2 selections and scenarios");
            bundle.suggestions = stage2->selected;
            bundle.scenarios = *scenarios;
            bundle.new_summary = stage2->new_summary;
        }
    }
    validate_bundle(bundle);
    return bundle;
}

struct AgentContext {
    const SuggestionLibrary* library = nullptr;
    GenerationBackend* backend = nullptr;
    AnalogyTable analogies;
    std::vector<std::string> deny_patterns;
    Stage3Params stage3;
    std::uint64_t seed = 0;
};

struct AgentResult {
    NudgeBundle bundle;
    std::vector<ScreenFlag> flags;
    std::map<Resource, std::vector<SuggestionRecord>> pool_ranked;
};

inline AgentResult generate_bundle(const AgentContext& ctx, const ParticipantProfile& profile,
                                   const std::vector<ParticipantProfile>& peers, Arm arm,
                                   int round, std::int64_t window_begin,
                                   std::int64_t window_end) {
    if (!ctx.backend) throw ValidationError("agent context: backend not set");
    AgentResult result;
    std::vector<UsageFeedback> feedback;
    if (arm != Arm::C)
        for (Resource r : kResources)
            feedback.push_back(stage1_usage_feedback(profile, peers, r, window_begin, window_end));

    if (arm != Arm::T2) {
        result.bundle = assemble_bundle(arm, profile, round, feedback, nullptr, nullptr);
        return result;
    }

    if (!ctx.library) throw ValidationError("agent context: suggestion library not set");
    std::uint64_t seed = derive_seed(ctx.seed, profile.participant_id,
                                     static_cast<std::uint64_t>(round));
    auto stage2 = stage2_select(*ctx.library, *ctx.backend, profile, feedback, round, seed);
    std::map<Resource, std::vector<QuantScenario>> scenarios;
    for (Resource r : kResources)
        for (const auto& s : stage2.selected[r])
            scenarios[r].push_back(stage3_quantify(s, profile, ctx.analogies, ctx.stage3));
    result.bundle = assemble_bundle(arm, profile, round, feedback, &stage2, &scenarios);
    result.flags = safety_screen(result.bundle, stage2.pool_ranked, ctx.deny_patterns, profile,
                                 ctx.analogies, ctx.stage3);
    validate_bundle(result.bundle);
    result.pool_ranked = std::move(stage2.pool_ranked);
    return result;
}

// ---------------------------------------------------------------------------
// Message rendering

namespace detail {

inline std::string format_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", std::fabs(v));
    return buf;
}

inline std::string render_feedback_line(const UsageFeedback& fb) {
    std::string unit = fb.resource == Resource::electricity ? "kWh of electricity"
                                                            : "L of hot water";
    std::string text = "This week you used " + format_estimate(round_sig(fb.total_since_last, 3)) +
                       " " + unit + "; ";
    if (fb.trend == Trend::up)
        text += "your usage trended up about " + format_pct(fb.percent_change) +
                "% within the week. ";
    else if (fb.trend == Trend::down)
        text += "your usage trended down about " + format_pct(fb.percent_change) +
                "% within the week. ";
    else
        text += "your usage held steady. ";
    double gap = (fb.peer_ratio - 1.0) * 100.0;
    if (fb.peer_ratio > 1.05)
        text += "The usage gap with the dorm average puts you about " + format_pct(gap) +
                "% above what most students use.";
    else if (fb.peer_ratio < 0.95)
        text += "You used about " + format_pct(gap) +
                "% less than the dorm average, ahead of most students.";
    else
        text += "Your usage sits right around the dorm average.";
    if (!fb.appliance_breakdown.empty() && fb.resource == Resource::electricity) {
        text += " Main contributors: " + fb.appliance_breakdown.front().first;
        if (fb.appliance_breakdown.size() > 1)
            text += " and " + fb.appliance_breakdown[1].first;
        text += ".";
    }
    return text;
}

}  // namespace detail

// Plain-text form of the outgoing message. Deterministic given the bundle;
// T2 adds a stage-appropriate closing line, so later rounds carry more
// planning and encouragement content.
inline std::string render_bundle_text(const NudgeBundle& bundle) {
    if (bundle.arm == Arm::C) return bundle.generic_text;
    std::string text;
    for (const auto& fb : bundle.feedback) {
        if (!text.empty()) text += "\n";
        text += detail::render_feedback_line(fb);
    }
    if (bundle.arm == Arm::T2) {
        for (Resource r : kResources) {
            auto it = bundle.scenarios.find(r);
            if (it == bundle.scenarios.end()) continue;
            for (const auto& sc : it->second) {
                text += "\n" + sc.suggestion_text;
                text += "\n" + sc.prose;
            }
        }
        if (bundle.round >= 3)
            text += "\nPlan ahead for next week: pick one change, set a reminder, and check it "
                    "off each day.";
        if (bundle.round >= 5)
            text += "\nYou can keep this up; small changes add up, and your progress so far "
                    "shows it works.";
    }
    return text;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const UsageFeedback& fb) {
    nlohmann::json shares = nlohmann::json::array();
    for (const auto& [name, share] : fb.appliance_breakdown)
        shares.push_back({{"name", name}, {"share", share}});
    return {{"resource", to_string(fb.resource)},
            {"total_since_last", fb.total_since_last},
            {"trend", to_string(fb.trend)},
            {"percent_change", fb.percent_change},
            {"peer_ratio", fb.peer_ratio},
            {"appliance_breakdown", shares}};
}

inline nlohmann::json to_json(const QuantScenario& sc) {
    return {{"suggestion_id", sc.suggestion_id},
            {"suggestion_text", sc.suggestion_text},
            {"behavior_delta", sc.behavior_delta},
            {"has_estimate", sc.has_estimate},
            {"estimated_saving", sc.estimated_saving},
            {"saving_unit", sc.saving_unit},
            {"analogy", sc.analogy},
            {"approximate_flag", sc.approximate_flag},
            {"prose", sc.prose}};
}

inline nlohmann::json to_json(const NudgeBundle& bundle) {
    nlohmann::json feedback = nlohmann::json::array();
    for (const auto& f : bundle.feedback) feedback.push_back(to_json(f));
    nlohmann::json suggestions = nlohmann::json::object();
    nlohmann::json scenarios = nlohmann::json::object();
    for (const auto& [resource, items] : bundle.suggestions) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& s : items) arr.push_back(to_json(s));
        suggestions[to_string(resource)] = std::move(arr);
    }
    for (const auto& [resource, items] : bundle.scenarios) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& s : items) arr.push_back(to_json(s));
        scenarios[to_string(resource)] = std::move(arr);
    }
    return {{"participant_id", bundle.participant_id},
            {"round", bundle.round},
            {"arm", to_string(bundle.arm)},
            {"format", to_string(bundle.format)},
            {"generic_text", bundle.generic_text},
            {"feedback", feedback},
            {"suggestions", suggestions},
            {"scenarios", scenarios},
            {"new_summary", bundle.new_summary}};
}

}  // namespace nudgekit
