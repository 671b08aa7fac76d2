#pragma once
// Structured conservation-suggestion library: load from line-delimited JSON
// and retrieve by deterministic lexical-overlap scoring.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "nudgekit/common.hpp"

namespace nudgekit {

struct SuggestionRecord {
    std::string id;
    std::string behavior_type;
    std::string appliance;
    Strategy strategy = Strategy::monitoring_feedback;
    Resource resource = Resource::electricity;
    std::string text;
};

inline nlohmann::json to_json(const SuggestionRecord& r) {
    return {{"id", r.id},
            {"behavior_type", r.behavior_type},
            {"appliance", r.appliance},
            {"strategy", to_string(r.strategy)},
            {"resource", to_string(r.resource)},
            {"text", r.text}};
}

inline SuggestionRecord suggestion_from_json(const nlohmann::json& j) {
    SuggestionRecord r;
    r.id = j.at("id").get<std::string>();
    r.behavior_type = j.at("behavior_type").get<std::string>();
    r.appliance = j.at("appliance").get<std::string>();
    r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    r.resource = resource_from_string(j.at("resource").get<std::string>());
    r.text = j.at("text").get<std::string>();
    if (r.text.empty()) throw ValidationError("suggestion record '" + r.id + "' has empty text");
    return r;
}

// Query side of retrieval: appliance inventory, behavior tags, and keywords
// distilled from the profile summary.
struct ProfileQuery {
    std::vector<std::string> appliances;
    std::vector<std::string> behavior_tags;
    std::vector<std::string> summary_keywords;
};

// Immutable after load; safe for concurrent readers.
class SuggestionLibrary {
public:
    SuggestionLibrary() = default;

    explicit SuggestionLibrary(std::vector<SuggestionRecord> records) {
        std::unordered_set<std::string> ids;
        for (auto& r : records) {
            if (!ids.insert(r.id).second)
                throw ValidationError("duplicate suggestion id '" + r.id + "'");
        }
        records_ = std::move(records);
    }

    std::size_t size() const { return records_.size(); }
    const std::vector<SuggestionRecord>& records() const { return records_; }

private:
    std::vector<SuggestionRecord> records_;
};

inline SuggestionLibrary load_library(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open suggestion library " + path);
    std::vector<SuggestionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record");
        try {
            records.push_back(suggestion_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return SuggestionLibrary(std::move(records));
}

// Lexical-overlap relevance: distinct shared tokens between query and record,
// appliance matches x3, behavior-type matches x2, suggestion-body matches x1.
inline int relevance_score(const SuggestionRecord& record, const ProfileQuery& query) {
    auto token_set = [](const std::vector<std::string>& fields) {
        std::set<std::string> s;
        for (const auto& f : fields)
            for (auto& t : tokenize(f)) s.insert(std::move(t));
        return s;
    };
    std::set<std::string> appliance_q = token_set(query.appliances);
    std::set<std::string> behavior_q = token_set(query.behavior_tags);
    std::set<std::string> all_q = appliance_q;
    all_q.insert(behavior_q.begin(), behavior_q.end());
    for (const auto& t : token_set(query.summary_keywords)) all_q.insert(t);

    int score = 0;
    for (const auto& t : token_set({record.appliance}))
        if (appliance_q.count(t)) score += 3;
    for (const auto& t : token_set({record.behavior_type}))
        if (behavior_q.count(t)) score += 2;
    for (const auto& t : token_set({record.text}))
        if (all_q.count(t)) score += 1;
    return score;
}

// Top-k records of the requested resource, by descending score then ascending
// id. Output for k1 <= k2 is a prefix of the k2 output.
inline std::vector<SuggestionRecord> retrieve_top_k(const SuggestionLibrary& library,
                                                    const ProfileQuery& query,
                                                    Resource resource, std::size_t k) {
    std::vector<std::pair<int, const SuggestionRecord*>> scored;
    for (const auto& r : library.records()) {
        if (r.resource != resource) continue;
        scored.emplace_back(relevance_score(r, query), &r);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->id < b.second->id;
    });
    std::vector<SuggestionRecord> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(*scored[i].second);
    return out;
}

}  // namespace nudgekit
