#pragma once
// Pluggable generation backend. Requests carry structured prompt fields plus
// a seed; responses carry structured text fields. The template backend is a
// deterministic stand-in used by default and under test; the remote backend
// speaks JSON over HTTP to a model server.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "nudgekit/common.hpp"
#include "nudgekit/knowledge_base.hpp"

namespace nudgekit {

struct BackendRequest {
    std::string task;  // "generate" | "rank" | "summarize"
    nlohmann::json fields = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::size_t max_length = 2048;
};

struct BackendResponse {
    nlohmann::json fields = nlohmann::json::object();
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual BackendResponse complete(const BackendRequest& request) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Template backend

// Strategy feasibility weights used by the template ranking.
inline double strategy_feasibility(Strategy s) {
    switch (s) {
        case Strategy::duration_control: return 3.0;
        case Strategy::frequency_reduction: return 3.0;
        case Strategy::temperature_adjustment: return 2.0;
        case Strategy::behavior_mode_change: return 2.0;
        default: return 1.0;  // monitoring_feedback
    }
}

class TemplateBackend final : public GenerationBackend {
public:
    std::string name() const override { return "template"; }

    BackendResponse complete(const BackendRequest& request) override {
        if (request.task == "generate") return generate(request);
        if (request.task == "rank") return rank(request);
        if (request.task == "summarize") return summarize(request);
        throw BackendError("template backend: unknown task '" + request.task + "'", 1);
    }

private:
    static std::string gen_id(const std::string& text) {
        return "gen-" + hex64(fnv1a64(text)).substr(0, 8);
    }

    BackendResponse generate(const BackendRequest& request) {
        Resource resource = resource_from_string(request.fields.at("resource").get<std::string>());
        std::vector<std::pair<std::string, double>> shares;
        for (const auto& item : request.fields.at("appliance_shares"))
            shares.emplace_back(item.at(0).get<std::string>(), item.at(1).get<double>());
        std::string top = shares.empty() ? std::string("shared appliances") : shares.front().first;
        std::string second = shares.size() > 1 ? shares[1].first : top;

        nlohmann::json out = nlohmann::json::array();
        auto add = [&](const std::string& behavior, const std::string& appliance, Strategy s,
                       const std::string& text) {
            out.push_back({{"id", gen_id(text)},
                           {"behavior_type", behavior},
                           {"appliance", appliance},
                           {"strategy", to_string(s)},
                           {"text", text}});
        };
        if (resource == Resource::electricity) {
            add("usage scheduling", top, Strategy::duration_control,
                "Trim about half an hour from your daily " + top +
                    " time, ideally during the hours you are out of the room.");
            add("standby habits", second, Strategy::behavior_mode_change,
                "Switch the " + second +
                    " to its power-saving mode and cut standby by powering the strip off "
                    "before you leave.");
        } else {
            add("showering", "shower", Strategy::duration_control,
                "Shave a little time off each shower; lathering with the water paused keeps "
                "comfort while trimming hot-water use.");
            add("showering", "shower", Strategy::temperature_adjustment,
                "Lower the shower temperature a notch or two; a slightly cooler rinse still "
                "feels fine and uses noticeably less hot water.");
        }
        BackendResponse resp;
        resp.fields["suggestions"] = std::move(out);
        return resp;
    }

    // Feasibility x impact. Impact is the stage-1 appliance share matched by
    // token overlap; unmatched appliances get a small floor so feasibility
    // still separates candidates.
    BackendResponse rank(const BackendRequest& request) {
        std::vector<std::pair<std::string, double>> shares;
        for (const auto& item : request.fields.at("appliance_shares"))
            shares.emplace_back(item.at(0).get<std::string>(), item.at(1).get<double>());

        struct Scored {
            std::string id;
            double score;
        };
        std::vector<Scored> scored;
        for (const auto& cand : request.fields.at("candidates")) {
            Strategy s = strategy_from_string(cand.at("strategy").get<std::string>());
            const std::string appliance = cand.at("appliance").get<std::string>();
            double impact = 0.05;
            auto cand_tokens = tokenize(appliance);
            for (const auto& [name, share] : shares) {
                auto share_tokens = tokenize(name);
                bool overlap = false;
                for (const auto& t : cand_tokens)
                    for (const auto& u : share_tokens)
                        if (t == u) overlap = true;
                if (overlap) impact = std::max(impact, share);
            }
            scored.push_back({cand.at("id").get<std::string>(),
                              strategy_feasibility(s) * impact});
        }
        std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.id < b.id;
        });
        nlohmann::json ranking = nlohmann::json::array();
        for (const auto& s : scored) ranking.push_back(s.id);
        BackendResponse resp;
        resp.fields["ranking"] = std::move(ranking);
        return resp;
    }

    // Structured answers to the four guiding questions, condensed into the
    // rolling summary carried forward on the profile.
    BackendResponse summarize(const BackendRequest& request) {
        const auto& f = request.fields;
        auto str = [&](const char* key) { return f.at(key).get<std::string>(); };
        std::string habits = "habits: relies most on " + str("top_appliance") +
                             "; electricity trend " + str("elec_trend") + ", hot water trend " +
                             str("water_trend") + "; conservation disposition " +
                             str("mean_psych") + " of 5.";
        std::string likely = "likely: short duration and frequency adjustments around " +
                             str("top_appliance") + " and showers fit current routines best.";
        std::string savings = "savings: largest headroom sits with " + str("top_appliance") +
                              " (usage share " + str("top_share") + ") and shower length.";
        std::string prior =
            f.at("prior_rounds").get<int>() == 0
                ? "prior: first personalized round, no earlier suggestions to assess."
                : "prior: " + str("prior_response") + " after " +
                      std::to_string(f.at("prior_rounds").get<int>()) + " round(s); " +
                      str("feedback_note");
        BackendResponse resp;
        resp.fields["summary"] = habits + "\n" + likely + "\n" + savings + "\n" + prior;
        return resp;
    }
};

// ---------------------------------------------------------------------------
// Remote backend (HTTP POST, endpoint/credentials from the environment)

struct RemoteBackendConfig {
    std::string url_env = "NUDGEKIT_BACKEND_URL";
    std::string key_env = "NUDGEKIT_BACKEND_KEY";
    std::string model_env = "NUDGEKIT_BACKEND_MODEL";
    int timeout_seconds = 30;
    int max_attempts = 3;
    double backoff_initial_seconds = 0.25;
    double backoff_cap_seconds = 2.0;
    int max_in_flight = 4;  // upper bound honored by callers issuing requests
};

// Transport hook so the HTTP layer can be stubbed in tests.
using RemoteTransport =
    std::function<std::pair<int, std::string>(const std::string& url, const std::string& body,
                                              const std::map<std::string, std::string>& headers,
                                              int timeout_seconds)>;

inline std::pair<int, std::string> http_post_json(
    const std::string& url, const std::string& body,
    const std::map<std::string, std::string>& headers, int timeout_seconds) {
    auto slash = url.find('/', url.find("//") == std::string::npos ? 0 : url.find("//") + 2);
    std::string origin = slash == std::string::npos ? url : url.substr(0, slash);
    std::string path = slash == std::string::npos ? "/" : url.substr(slash);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    httplib::Headers hdrs;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type")
            content_type = v;
        else
            hdrs.emplace(k, v);
    }
    auto result = client.Post(path, hdrs, body, content_type);
    if (!result) return {0, httplib::to_string(result.error())};
    return {result->status, result->body};
}

class RemoteBackend final : public GenerationBackend {
public:
    explicit RemoteBackend(RemoteBackendConfig config = {}, RemoteTransport transport = {})
        : config_(std::move(config)), transport_(std::move(transport)) {
        const char* url = std::getenv(config_.url_env.c_str());
        if (!url || !*url)
            throw ValidationError("remote backend: " + config_.url_env + " is not set");
        url_ = url;
        if (const char* key = std::getenv(config_.key_env.c_str())) api_key_ = key;
        if (const char* model = std::getenv(config_.model_env.c_str())) model_ = model;
        if (!transport_) transport_ = http_post_json;
    }

    std::string name() const override { return "remote"; }

    BackendResponse complete(const BackendRequest& request) override {
        nlohmann::json body = {{"task", request.task},
                               {"fields", request.fields},
                               {"seed", request.seed},
                               {"max_length", request.max_length}};
        if (!model_.empty()) body["model"] = model_;
        std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
        if (!api_key_.empty()) headers["Authorization"] = "Bearer " + api_key_;

        double backoff = config_.backoff_initial_seconds;
        std::string last_error;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            auto [status, text] = transport_(url_, body.dump(), headers, config_.timeout_seconds);
            if (status == 200) {
                nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
                if (!j.is_discarded() && j.contains("fields")) {
                    BackendResponse resp;
                    resp.fields = j["fields"];
                    return resp;
                }
                last_error = "malformed backend response";
            } else {
                last_error = "backend HTTP status " + std::to_string(status);
            }
            if (attempt < config_.max_attempts) {
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
                backoff = std::min(backoff * 2.0, config_.backoff_cap_seconds);
            }
        }
        throw BackendError("remote backend failed: " + last_error, config_.max_attempts);
    }

private:
    RemoteBackendConfig config_;
    RemoteTransport transport_;
    std::string url_;
    std::string api_key_;
    std::string model_;
};

}  // namespace nudgekit
