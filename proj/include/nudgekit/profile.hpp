#pragma once
// Participant profile package: psychology scores, sociodemographics,
// consumption history, delivered suggestions, feedback, and the rolling
// summary carried between nudge rounds. Profiles are values; updates return
// new values.

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nudgekit/common.hpp"

namespace nudgekit {

struct PsychScores {
    double self_efficacy = 3.0;
    double outcome_expectations = 3.0;
    double perceived_impediments = 3.0;
    double attitude = 3.0;
    double neighborhood_perception = 3.0;

    std::array<double, 5> as_array() const {
        return {self_efficacy, outcome_expectations, perceived_impediments, attitude,
                neighborhood_perception};
    }
    void validate() const {
        for (double v : as_array())
            if (v < 1.0 || v > 5.0)
                throw ValidationError("psych score outside [1,5]");
    }
};

// One observed day: epoch day plus a nonnegative value. Gaps are represented
// by absent days, never imputed here.
struct DailyObservation {
    std::int64_t day = 0;
    double value = 0.0;
};

struct DeliveredSuggestion {
    int round = 0;
    std::string suggestion;  // record id or generated-suggestion id
};

struct FeedbackEntry {
    int round = 0;
    std::string text;
};

// Per-event usage parameters the scenario builder draws on.
struct UsageParams {
    double shower_flow_lpm = 30.0;
    double showers_per_week = 5.0;
    double shower_minutes = 8.0;
    double appliance_kwh_per_hour = 0.9;
    double appliance_hours_per_week = 20.0;
};

struct ParticipantProfile {
    std::string participant_id;
    PsychScores psych;
    double living_budget = 0.0;  // thousand RMB / month
    Gender gender = Gender::other;
    bool bill_experience = false;
    std::vector<std::string> appliance_inventory;
    std::map<Resource, std::vector<DailyObservation>> consumption_history;
    std::vector<DeliveredSuggestion> prior_suggestions;
    std::vector<FeedbackEntry> feedback_log;
    std::string summary;
    UsageParams usage;

    double mean_psych() const {
        auto a = psych.as_array();
        double s = 0.0;
        for (double v : a) s += v;
        return s / static_cast<double>(a.size());
    }

    int last_round() const {
        int r = 0;
        for (const auto& s : prior_suggestions) r = std::max(r, s.round);
        for (const auto& f : feedback_log) r = std::max(r, f.round);
        return r;
    }

    void validate() const {
        psych.validate();
        if (living_budget < 0.0) throw ValidationError("negative living budget");
        for (const auto& [res, series] : consumption_history) {
            std::int64_t prev = INT64_MIN;
            for (const auto& obs : series) {
                if (obs.value < 0.0)
                    throw ValidationError("negative consumption for " + participant_id);
                if (obs.day <= prev)
                    throw ValidationError("non-increasing dates for " + participant_id);
                prev = obs.day;
            }
        }
        int prev_round = 0;
        for (const auto& s : prior_suggestions) {
            if (s.round < prev_round)
                throw ValidationError("prior_suggestions rounds out of order");
            prev_round = s.round;
        }
    }
};

inline double mean_psych(const ParticipantProfile& p) { return p.mean_psych(); }

// One round's worth of new participant data.
struct RoundData {
    int round = 0;
    std::map<Resource, std::vector<DailyObservation>> consumption;
    std::vector<std::string> feedback;               // free text, possibly empty
    std::vector<std::string> delivered_suggestions;  // ids/texts delivered this round
};

// Non-destructive append of one round of data plus summary replacement.
inline ParticipantProfile update_profile(const ParticipantProfile& profile,
                                         const RoundData& round_data,
                                         const std::string& new_summary) {
    if (round_data.round != profile.last_round() + 1) {
        throw SequencingError("profile " + profile.participant_id + ": expected round " +
                              std::to_string(profile.last_round() + 1) + ", got " +
                              std::to_string(round_data.round));
    }
    ParticipantProfile next = profile;
    for (const auto& [res, series] : round_data.consumption) {
        auto& hist = next.consumption_history[res];
        std::int64_t last_day = hist.empty() ? INT64_MIN : hist.back().day;
        for (const auto& obs : series) {
            if (obs.value < 0.0)
                throw ValidationError("negative consumption in round data");
            if (obs.day <= last_day)
                throw ValidationError("round data days must extend the history");
            hist.push_back(obs);
            last_day = obs.day;
        }
    }
    for (const auto& text : round_data.feedback)
        next.feedback_log.push_back({round_data.round, text});
    for (const auto& s : round_data.delivered_suggestions)
        next.prior_suggestions.push_back({round_data.round, s});
    next.summary = new_summary;
    next.validate();
    return next;
}

// ---------------------------------------------------------------------------
// Serialization (versioned line-delimited JSON snapshots)

constexpr int kProfileSchemaVersion = 1;

inline nlohmann::json to_json(const ParticipantProfile& p) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [res, series] : p.consumption_history) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& obs : series) arr.push_back({{"day", obs.day}, {"value", obs.value}});
        hist[to_string(res)] = std::move(arr);
    }
    nlohmann::json sugg = nlohmann::json::array();
    for (const auto& s : p.prior_suggestions)
        sugg.push_back({{"round", s.round}, {"suggestion", s.suggestion}});
    nlohmann::json fb = nlohmann::json::array();
    for (const auto& f : p.feedback_log) fb.push_back({{"round", f.round}, {"text", f.text}});
    return {{"version", kProfileSchemaVersion},
            {"participant_id", p.participant_id},
            {"psych",
             {{"self_efficacy", p.psych.self_efficacy},
              {"outcome_expectations", p.psych.outcome_expectations},
              {"perceived_impediments", p.psych.perceived_impediments},
              {"attitude", p.psych.attitude},
              {"neighborhood_perception", p.psych.neighborhood_perception}}},
            {"living_budget", p.living_budget},
            {"gender", to_string(p.gender)},
            {"bill_experience", p.bill_experience},
            {"appliance_inventory", p.appliance_inventory},
            {"consumption_history", std::move(hist)},
            {"prior_suggestions", std::move(sugg)},
            {"feedback_log", std::move(fb)},
            {"summary", p.summary},
            {"usage",
             {{"shower_flow_lpm", p.usage.shower_flow_lpm},
              {"showers_per_week", p.usage.showers_per_week},
              {"shower_minutes", p.usage.shower_minutes},
              {"appliance_kwh_per_hour", p.usage.appliance_kwh_per_hour},
              {"appliance_hours_per_week", p.usage.appliance_hours_per_week}}}};
}

inline ParticipantProfile profile_from_json(const nlohmann::json& j) {
    int version = j.at("version").get<int>();
    if (version != kProfileSchemaVersion)
        throw ParseError("unsupported profile schema version " + std::to_string(version));
    ParticipantProfile p;
    p.participant_id = j.at("participant_id").get<std::string>();
    const auto& ps = j.at("psych");
    p.psych.self_efficacy = ps.at("self_efficacy").get<double>();
    p.psych.outcome_expectations = ps.at("outcome_expectations").get<double>();
    p.psych.perceived_impediments = ps.at("perceived_impediments").get<double>();
    p.psych.attitude = ps.at("attitude").get<double>();
    p.psych.neighborhood_perception = ps.at("neighborhood_perception").get<double>();
    p.living_budget = j.at("living_budget").get<double>();
    p.gender = gender_from_string(j.at("gender").get<std::string>());
    p.bill_experience = j.at("bill_experience").get<bool>();
    p.appliance_inventory = j.at("appliance_inventory").get<std::vector<std::string>>();
    for (const auto& [key, arr] : j.at("consumption_history").items()) {
        auto& series = p.consumption_history[resource_from_string(key)];
        for (const auto& o : arr)
            series.push_back({o.at("day").get<std::int64_t>(), o.at("value").get<double>()});
    }
    for (const auto& s : j.at("prior_suggestions"))
        p.prior_suggestions.push_back(
            {s.at("round").get<int>(), s.at("suggestion").get<std::string>()});
    for (const auto& f : j.at("feedback_log"))
        p.feedback_log.push_back({f.at("round").get<int>(), f.at("text").get<std::string>()});
    p.summary = j.at("summary").get<std::string>();
    const auto& u = j.at("usage");
    p.usage.shower_flow_lpm = u.at("shower_flow_lpm").get<double>();
    p.usage.showers_per_week = u.at("showers_per_week").get<double>();
    p.usage.shower_minutes = u.at("shower_minutes").get<double>();
    p.usage.appliance_kwh_per_hour = u.at("appliance_kwh_per_hour").get<double>();
    p.usage.appliance_hours_per_week = u.at("appliance_hours_per_week").get<double>();
    p.validate();
    return p;
}

inline void write_profiles(const std::string& path,
                           const std::vector<ParticipantProfile>& profiles) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& p : profiles) out << to_json(p).dump() << '\n';
}

inline std::vector<ParticipantProfile> read_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open profiles " + path);
    std::vector<ParticipantProfile> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed profile");
        out.push_back(profile_from_json(j));
    }
    return out;
}

}  // namespace nudgekit
