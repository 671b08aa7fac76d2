#pragma once
// Dictionary-based content analysis: greedy longest-match-first keyword
// counting (token or raw-character matching), per-class share comparisons,
// and round-level drift. A lightweight stand-in for the paper-style topic
// model, labeled as such in outputs.

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nudgekit/common.hpp"

namespace nudgekit {

enum class ContentCategory {
    usage_gap,
    appliance_context,
    planning_action,
    social_norms,
    encouraging_efficacy,
};
constexpr int kNumContentCategories = 5;

inline const char* to_string(ContentCategory c) {
    switch (c) {
        case ContentCategory::usage_gap: return "usage_gap";
        case ContentCategory::appliance_context: return "appliance_context";
        case ContentCategory::planning_action: return "planning_action";
        case ContentCategory::social_norms: return "social_norms";
        default: return "encouraging_efficacy";
    }
}

inline ContentCategory content_category_from_string(const std::string& s) {
    for (int c = 0; c < kNumContentCategories; ++c)
        if (s == to_string(static_cast<ContentCategory>(c)))
            return static_cast<ContentCategory>(c);
    throw ParseError("unknown content category: " + s);
}

struct KeywordDictionaries {
    std::array<std::vector<std::string>, kNumContentCategories> phrases;

    void add(ContentCategory category, const std::string& phrase) {
        if (phrase.empty()) throw ValidationError("dictionary: empty phrase");
        auto& list = phrases[static_cast<int>(category)];
        if (std::find(list.begin(), list.end(), phrase) != list.end())
            throw ValidationError("dictionary: duplicate phrase '" + phrase + "' in " +
                                  to_string(category));
        list.push_back(phrase);
    }
};

// Plain-text config: "[category]" headers, one phrase per line, '#' comments.
inline KeywordDictionaries load_dictionaries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dictionary file " + path);
    KeywordDictionaries dicts;
    std::string line;
    bool have_category = false;
    ContentCategory current = ContentCategory::usage_gap;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        std::size_t start = line.find_first_not_of(' ');
        if (start == std::string::npos) continue;
        line = line.substr(start);
        if (line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            current = content_category_from_string(line.substr(1, line.size() - 2));
            have_category = true;
            continue;
        }
        if (!have_category)
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": phrase before any [category] header");
        dicts.add(current, line);
    }
    return dicts;
}

struct ContentProfile {
    std::string message_id;
    std::array<int, kNumContentCategories> counts{};
    std::array<double, kNumContentCategories> shares{};
    bool has_shares = false;  // true when total count > 0
    int round = 0;
    std::string arm_class;  // "conventional" | "personalized"

    int total() const {
        int t = 0;
        for (int c : counts) t += c;
        return t;
    }
};

enum class MatchMode { tokens, chars };

namespace detail {

struct PhraseEntry {
    int category;
    std::string phrase;
    std::vector<std::string> tokens;
};

// Longest phrases first; ties resolve by category order then phrase text, so
// counting is deterministic.
inline std::vector<PhraseEntry> ordered_phrases(const KeywordDictionaries& dicts,
                                                MatchMode mode) {
    std::vector<PhraseEntry> entries;
    for (int c = 0; c < kNumContentCategories; ++c) {
        for (const auto& phrase : dicts.phrases[c]) {
            PhraseEntry e;
            e.category = c;
            e.phrase = mode == MatchMode::chars ? to_lower(phrase) : phrase;
            if (mode == MatchMode::tokens) e.tokens = tokenize(phrase, false);
            entries.push_back(std::move(e));
        }
    }
    std::sort(entries.begin(), entries.end(), [mode](const PhraseEntry& a, const PhraseEntry& b) {
        std::size_t la = mode == MatchMode::tokens ? a.tokens.size() : a.phrase.size();
        std::size_t lb = mode == MatchMode::tokens ? b.tokens.size() : b.phrase.size();
        if (la != lb) return la > lb;
        if (a.category != b.category) return a.category < b.category;
        return a.phrase < b.phrase;
    });
    return entries;
}

}  // namespace detail

inline ContentProfile count_keywords(const std::string& text, const KeywordDictionaries& dicts,
                                     MatchMode mode = MatchMode::tokens) {
    ContentProfile profile;
    auto entries = detail::ordered_phrases(dicts, mode);

    if (mode == MatchMode::tokens) {
        std::vector<std::string> tokens = tokenize(text, false);
        std::vector<bool> consumed(tokens.size(), false);
        for (const auto& entry : entries) {
            if (entry.tokens.empty()) continue;
            std::size_t m = entry.tokens.size();
            for (std::size_t i = 0; i + m <= tokens.size(); ++i) {
                bool ok = true;
                for (std::size_t j = 0; j < m && ok; ++j)
                    ok = !consumed[i + j] && tokens[i + j] == entry.tokens[j];
                if (!ok) continue;
                for (std::size_t j = 0; j < m; ++j) consumed[i + j] = true;
                ++profile.counts[entry.category];
                i += m - 1;
            }
        }
    } else {
        std::string lowered = to_lower(text);
        std::vector<bool> consumed(lowered.size(), false);
        for (const auto& entry : entries) {
            std::size_t m = entry.phrase.size();
            if (m == 0) continue;
            for (std::size_t i = 0; i + m <= lowered.size();) {
                if (lowered.compare(i, m, entry.phrase) != 0) {
                    ++i;
                    continue;
                }
                bool free_span = true;
                for (std::size_t j = 0; j < m && free_span; ++j) free_span = !consumed[i + j];
                if (!free_span) {
                    ++i;
                    continue;
                }
                for (std::size_t j = 0; j < m; ++j) consumed[i + j] = true;
                ++profile.counts[entry.category];
                i += m;
            }
        }
    }

    int total = profile.total();
    if (total > 0) {
        profile.has_shares = true;
        for (int c = 0; c < kNumContentCategories; ++c)
            profile.shares[c] = static_cast<double>(profile.counts[c]) / total;
    }
    return profile;
}

// ---------------------------------------------------------------------------
// Round drift (early rounds 1-2, middle 3-4, final 5)

struct DriftTable {
    std::array<std::array<double, kNumContentCategories>, 3> stage_mean_counts{};
    std::array<int, 3> stage_messages{};
    std::array<bool, kNumContentCategories> monotone_increase{};
};

inline int drift_stage(int round) { return round <= 2 ? 0 : (round <= 4 ? 1 : 2); }

inline DriftTable round_drift(const std::vector<ContentProfile>& profiles) {
    DriftTable table;
    for (const auto& p : profiles) {
        int stage = drift_stage(p.round);
        ++table.stage_messages[stage];
        for (int c = 0; c < kNumContentCategories; ++c)
            table.stage_mean_counts[stage][c] += p.counts[c];
    }
    for (int s = 0; s < 3; ++s)
        if (table.stage_messages[s] > 0)
            for (int c = 0; c < kNumContentCategories; ++c)
                table.stage_mean_counts[s][c] /= table.stage_messages[s];
    for (int c = 0; c < kNumContentCategories; ++c)
        table.monotone_increase[c] =
            table.stage_mean_counts[0][c] < table.stage_mean_counts[1][c] &&
            table.stage_mean_counts[1][c] < table.stage_mean_counts[2][c];
    return table;
}

// ---------------------------------------------------------------------------
// Class shares

struct GroupShares {
    // class name -> mean share vector over messages with nonzero totals
    std::map<std::string, std::array<double, kNumContentCategories>> shares;
    std::map<std::string, int> messages_used;
};

inline GroupShares group_shares(const std::vector<ContentProfile>& profiles) {
    GroupShares out;
    std::map<std::string, std::pair<std::array<double, kNumContentCategories>, int>> acc;
    for (const auto& p : profiles) {
        if (!p.has_shares) continue;
        auto& [sum, count] = acc[p.arm_class];
        for (int c = 0; c < kNumContentCategories; ++c) sum[c] += p.shares[c];
        ++count;
    }
    for (auto& [cls, cell] : acc) {
        auto& [sum, count] = cell;
        std::array<double, kNumContentCategories> mean{};
        for (int c = 0; c < kNumContentCategories; ++c) mean[c] = sum[c] / count;
        out.shares[cls] = mean;
        out.messages_used[cls] = count;
    }
    return out;
}

}  // namespace nudgekit
