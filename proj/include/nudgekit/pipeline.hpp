#pragma once
// Run configuration and the four pipeline stages behind the CLI:
// simulate, nudge, analyze, report.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nudgekit/analysis.hpp"
#include "nudgekit/backend.hpp"
#include "nudgekit/csv.hpp"
#include "nudgekit/knowledge_base.hpp"
#include "nudgekit/nudge_agent.hpp"
#include "nudgekit/predictors.hpp"
#include "nudgekit/profile.hpp"
#include "nudgekit/text_metrics.hpp"
#include "nudgekit/trial_sim.hpp"

namespace nudgekit {

constexpr const char* kNudgekitVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Run configuration

struct AnalysisToggles {
    int permutation_draws = 500;
    bool hte = true;
    bool permutation = true;
    bool content = true;
    bool importance = true;
    bool archetypes = true;
};

struct RunConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;
    SimConfig sim;
    CleanConfig clean;
    std::string out_dir = "out";
    std::string backend = "template";
    std::string suggestions_path = "data/suggestions.jsonl";
    std::string analogies_path = "configs/analogies.json";
    std::string deny_path = "configs/deny_list.txt";
    std::string dictionaries_path = "configs/dictionaries.txt";
    AnalysisToggles analysis;
};

inline void validate_run_config(const RunConfig& cfg) {
    if (!cfg.seed_set)
        throw ValidationError("config: seed is required (set it in the config file or pass --seed)");
    if (cfg.sim.n_participants < 3)
        throw ValidationError("config: population must be at least 3");
    if (cfg.sim.rounds < 1 || cfg.sim.rounds > kNumRounds)
        throw ValidationError("config: rounds must be between 1 and " +
                              std::to_string(kNumRounds));
    if (cfg.backend != "template" && cfg.backend != "remote")
        throw ValidationError("config: backend must be 'template' or 'remote'");
    if (cfg.analysis.permutation_draws < 1)
        throw ValidationError("config: permutation_draws must be positive");
    if (cfg.out_dir.empty()) throw ValidationError("config: out_dir is empty");
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.seed_set = true;
    }
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("backend")) cfg.backend = j.at("backend").get<std::string>();
    if (j.contains("sim")) cfg.sim = j.at("sim").get<SimConfig>();
    if (j.contains("clean")) {
        const auto& c = j.at("clean");
        cfg.clean.iqr_multiplier = c.value("iqr_multiplier", cfg.clean.iqr_multiplier);
        cfg.clean.max_missing_share = c.value("max_missing_share", cfg.clean.max_missing_share);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfg.suggestions_path = d.value("suggestions", cfg.suggestions_path);
        cfg.analogies_path = d.value("analogies", cfg.analogies_path);
        cfg.deny_path = d.value("deny_list", cfg.deny_path);
        cfg.dictionaries_path = d.value("dictionaries", cfg.dictionaries_path);
    }
    if (j.contains("analysis")) {
        const auto& a = j.at("analysis");
        cfg.analysis.permutation_draws =
            a.value("permutation_draws", cfg.analysis.permutation_draws);
        cfg.analysis.hte = a.value("hte", cfg.analysis.hte);
        cfg.analysis.permutation = a.value("permutation", cfg.analysis.permutation);
        cfg.analysis.content = a.value("content", cfg.analysis.content);
        cfg.analysis.importance = a.value("importance", cfg.analysis.importance);
        cfg.analysis.archetypes = a.value("archetypes", cfg.analysis.archetypes);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
        return run_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Output layout

namespace paths {

inline std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline std::string panel(const std::string& d) { return join(d, "panel.csv"); }
inline std::string assignment(const std::string& d) { return join(d, "assignment.csv"); }
inline std::string engagement(const std::string& d) { return join(d, "engagement.csv"); }
inline std::string profiles(const std::string& d) { return join(d, "profiles.jsonl"); }
inline std::string profiles_round(const std::string& d, int r) {
    return join(d, "profiles_round_" + std::to_string(r) + ".jsonl");
}
inline std::string bundles_round(const std::string& d, int r) {
    return join(d, "bundles_round_" + std::to_string(r) + ".jsonl");
}
inline std::string manifest(const std::string& d) { return join(d, "manifest.json"); }
inline std::string report(const std::string& d) { return join(d, "report.txt"); }

}  // namespace paths

inline std::string digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return "fnv1a64:" + hex64(fnv1a64(buf.str()));
}

inline nlohmann::json module_versions() {
    return {{"nudgekit", kNudgekitVersion},
            {"profile_schema", kProfileSchemaVersion},
            {"tree_schema", kTreeSchemaVersion}};
}

inline void require_input(const std::string& path, const std::string& hint) {
    if (!std::filesystem::exists(path))
        throw DependencyError(path + " is missing; " + hint);
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// simulate

inline void print_exclusion_report(const ExclusionReport& report, std::ostream& log) {
    log << "data cleaning report\n";
    for (Resource r : kResources) {
        double fence = 0.0;
        int flagged = 0;
        if (auto it = report.upper_fence.find(r); it != report.upper_fence.end())
            fence = it->second;
        if (auto it = report.flagged_observations.find(r); it != report.flagged_observations.end())
            flagged = it->second;
        log << "  " << to_string(r) << ": upper fence " << format_double(fence) << ", "
            << flagged << " observations flagged\n";
    }
    for (Arm arm : {Arm::C, Arm::T1, Arm::T2}) {
        for (Resource r : kResources) {
            ExclusionReport::Cell cell;
            if (auto ait = report.cells.find(arm); ait != report.cells.end())
                if (auto rit = ait->second.find(r); rit != ait->second.end()) cell = rit->second;
            log << "  arm " << to_string(arm) << ", " << to_string(r) << ": kept " << cell.kept
                << ", excluded " << cell.excluded << "\n";
        }
    }
}

inline void cmd_simulate(const RunConfig& cfg, std::ostream& log = std::cout) {
    validate_run_config(cfg);
    Population pop = synth_population(cfg.sim, cfg.seed);
    Assignment assignment = randomize(pop, cfg.seed);
    TrialData trial = simulate_trial(pop, assignment, cfg.sim, cfg.seed);

    std::filesystem::create_directories(cfg.out_dir);
    write_panel_csv(trial.panel, paths::panel(cfg.out_dir));

    {
        CsvWriter w(paths::assignment(cfg.out_dir));
        w.row({"participant_id", "cluster_id", "arm"});
        for (const auto& sp : pop.participants)
            w.row({sp.profile.participant_id, sp.cluster_id,
                   to_string(assignment.arm_of_participant.at(sp.profile.participant_id))});
    }
    {
        CsvWriter w(paths::engagement(cfg.out_dir));
        w.row({"participant_id", "arm", "cluster_id", "round", "opened", "replied",
               "reply_hours", "feedback_text"});
        for (const auto& ev : trial.engagement)
            w.row({ev.participant_id, to_string(ev.arm), ev.cluster_id,
                   std::to_string(ev.round), ev.opened ? "1" : "0", ev.replied ? "1" : "0",
                   ev.replied ? format_double(ev.reply_hours) : std::string(),
                   ev.feedback_text});
    }

    // Profile snapshots carry the observed (valid) baseline days.
    std::map<std::string, std::map<Resource, std::vector<DailyObservation>>> baseline;
    for (const auto& row : trial.panel.rows) {
        if (row.round != 0 || row.missing || !std::isfinite(row.value)) continue;
        baseline[row.participant_id][row.resource].push_back({row.day, row.value});
    }
    std::vector<ParticipantProfile> profiles;
    profiles.reserve(pop.participants.size());
    for (const auto& sp : pop.participants) {
        ParticipantProfile p = sp.profile;
        if (auto it = baseline.find(p.participant_id); it != baseline.end())
            p.consumption_history = it->second;
        p.validate();
        profiles.push_back(std::move(p));
    }
    write_profiles(paths::profiles(cfg.out_dir), profiles);

    CleanResult cleaned = clean_panel(trial.panel, cfg.clean);
    print_exclusion_report(cleaned.report, log);
    log << "simulate: " << pop.participants.size() << " participants, arms C/T1/T2 = "
        << assignment.arm_sizes[0] << "/" << assignment.arm_sizes[1] << "/"
        << assignment.arm_sizes[2] << ", panel rows " << trial.panel.rows.size() << "\n";
}

// ---------------------------------------------------------------------------
// nudge

namespace detail {

inline std::map<std::string, Arm> read_assignment_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    std::size_t pid = t.col("participant_id");
    std::size_t arm = t.col("arm");
    std::map<std::string, Arm> out;
    for (const auto& row : t.rows) out[row[pid]] = arm_from_string(row[arm]);
    return out;
}

inline std::vector<EngagementEvent> read_engagement_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    std::size_t pid = t.col("participant_id");
    std::size_t arm = t.col("arm");
    std::size_t cluster = t.col("cluster_id");
    std::size_t round = t.col("round");
    std::size_t opened = t.col("opened");
    std::size_t replied = t.col("replied");
    std::size_t hours = t.col("reply_hours");
    std::size_t text = t.col("feedback_text");
    std::vector<EngagementEvent> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        EngagementEvent ev;
        ev.participant_id = row[pid];
        ev.arm = arm_from_string(row[arm]);
        ev.cluster_id = row[cluster];
        ev.round = std::stoi(row[round]);
        ev.opened = row[opened] == "1";
        ev.replied = row[replied] == "1";
        ev.reply_hours = row[hours].empty() ? 0.0 : std::stod(row[hours]);
        ev.feedback_text = row[text];
        out.push_back(std::move(ev));
    }
    return out;
}

// True when the profile holds at least one observation per resource in
// [begin, end].
inline bool window_covered(const ParticipantProfile& profile, std::int64_t begin,
                           std::int64_t end) {
    for (Resource r : kResources) {
        auto it = profile.consumption_history.find(r);
        if (it == profile.consumption_history.end()) return false;
        bool any = false;
        for (const auto& obs : it->second)
            if (obs.day >= begin && obs.day <= end) {
                any = true;
                break;
            }
        if (!any) return false;
    }
    return true;
}

inline std::vector<std::string> load_deny_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open deny list " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t a = line.find_first_not_of(" \t");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t");
        line = line.substr(a, b - a + 1);
        if (line.empty() || line[0] == '#') continue;
        out.push_back(line);
    }
    return out;
}

inline AnalogyTable load_analogies(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open analogy table " + path);
    try {
        nlohmann::json j;
        in >> j;
        return analogy_table_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("analogy table " + path + ": " + e.what());
    }
}

}  // namespace detail

inline void cmd_nudge(const RunConfig& cfg, int round, std::ostream& log = std::cout) {
    validate_run_config(cfg);
    if (round < 1 || round > cfg.sim.rounds)
        throw ValidationError("nudge: round must be between 1 and " +
                              std::to_string(cfg.sim.rounds));

    const std::string& dir = cfg.out_dir;
    require_input(paths::panel(dir), "run `simulate` first");
    require_input(paths::assignment(dir), "run `simulate` first");
    require_input(paths::engagement(dir), "run `simulate` first");
    std::string profiles_in =
        round == 1 ? paths::profiles(dir) : paths::profiles_round(dir, round - 1);
    require_input(profiles_in, round == 1
                                   ? "run `simulate` first"
                                   : "run `nudge --round " + std::to_string(round - 1) + "` first");

    std::map<std::string, Arm> arm_of = detail::read_assignment_csv(paths::assignment(dir));
    std::vector<ParticipantProfile> profiles = read_profiles(profiles_in);
    Panel panel = read_panel_csv(paths::panel(dir));
    if (panel.rows.empty()) throw DependencyError("panel is empty; rerun `simulate`");
    std::int64_t start_day = panel.rows.front().day;
    for (const auto& row : panel.rows) start_day = std::min(start_day, row.day);

    if (round >= 2) {
        std::string bundles_in = paths::bundles_round(dir, round - 1);
        require_input(bundles_in,
                      "run `nudge --round " + std::to_string(round - 1) + "` first");
        std::map<std::string, std::vector<std::string>> delivered;
        for (const auto& j : read_jsonl(bundles_in)) {
            std::string id = j.at("participant_id").get<std::string>();
            Arm arm = arm_from_string(j.at("arm").get<std::string>());
            std::vector<std::string>& ids = delivered[id];
            if (arm == Arm::T2) {
                for (const auto& [res, arr] : j.at("suggestions").items())
                    for (const auto& s : arr) ids.push_back(s.at("id").get<std::string>());
            } else {
                ids.push_back((arm == Arm::C ? "link-r" : "report-r") +
                              std::to_string(round - 1));
            }
        }

        std::map<std::string, std::map<Resource, std::vector<DailyObservation>>> consumption;
        for (const auto& row : panel.rows) {
            if (row.round != round - 1 || row.missing || !std::isfinite(row.value)) continue;
            consumption[row.participant_id][row.resource].push_back({row.day, row.value});
        }
        std::map<std::string, std::vector<std::string>> feedback;
        for (const auto& ev : detail::read_engagement_csv(paths::engagement(dir)))
            if (ev.round == round - 1 && ev.replied)
                feedback[ev.participant_id].push_back(ev.feedback_text);

        for (auto& p : profiles) {
            auto dit = delivered.find(p.participant_id);
            if (dit == delivered.end())
                throw DependencyError("no round " + std::to_string(round - 1) + " bundle for " +
                                      p.participant_id + "; rerun the earlier rounds");
            RoundData rd;
            rd.round = round - 1;
            if (auto cit = consumption.find(p.participant_id); cit != consumption.end())
                rd.consumption = cit->second;
            if (auto fit = feedback.find(p.participant_id); fit != feedback.end())
                rd.feedback = fit->second;
            rd.delivered_suggestions = dit->second;
            p = update_profile(p, rd, p.summary);
        }
    }

    SuggestionLibrary library = load_library(cfg.suggestions_path);
    TemplateBackend template_backend;
    std::unique_ptr<RemoteBackend> remote;
    GenerationBackend* backend = &template_backend;
    if (cfg.backend == "remote") {
        remote = std::make_unique<RemoteBackend>();
        backend = remote.get();
    }
    AgentContext ctx;
    ctx.library = &library;
    ctx.backend = backend;
    ctx.analogies = detail::load_analogies(cfg.analogies_path);
    ctx.deny_patterns = detail::load_deny_list(cfg.deny_path);
    ctx.seed = cfg.seed;

    std::int64_t nudge_day =
        start_day + cfg.sim.baseline_days + static_cast<std::int64_t>(round - 1) *
                                                cfg.sim.round_length_days;
    std::int64_t window_end = nudge_day - 1;

    std::ofstream out(paths::bundles_round(dir, round));
    if (!out) throw IoError("cannot write " + paths::bundles_round(dir, round));
    int written = 0;
    for (auto& p : profiles) {
        auto ait = arm_of.find(p.participant_id);
        if (ait == arm_of.end())
            throw DependencyError("assignment table has no row for " + p.participant_id);

        // Widen the feedback window when the nominal week is fully
        // unreported for either resource.
        std::int64_t window_begin = nudge_day - cfg.sim.round_length_days;
        if (!detail::window_covered(p, window_begin, window_end)) {
            window_begin = nudge_day - 2 * cfg.sim.round_length_days;
            if (!detail::window_covered(p, window_begin, window_end)) window_begin = start_day;
        }

        AgentResult result =
            generate_bundle(ctx, p, profiles, ait->second, round, window_begin, window_end);
        if (ait->second == Arm::T2) p.summary = result.bundle.new_summary;

        nlohmann::json line = to_json(result.bundle);
        line["message_text"] = render_bundle_text(result.bundle);
        if (!result.flags.empty()) {
            nlohmann::json flags = nlohmann::json::array();
            for (const auto& f : result.flags)
                flags.push_back({{"resource", to_string(f.resource)},
                                 {"removed_id", f.removed_id},
                                 {"pattern", f.pattern},
                                 {"replacement_id", f.replacement_id}});
            line["screen_flags"] = std::move(flags);
        }
        out << line.dump() << '\n';
        ++written;
    }
    write_profiles(paths::profiles_round(dir, round), profiles);
    log << "nudge round " << round << ": wrote " << written << " bundles ("
        << backend->name() << " backend)\n";
}

// ---------------------------------------------------------------------------
// analyze

struct AnalysisOutcome {
    std::string name;
    bool ran = false;
    std::string reason;  // skip reason when not run
    std::string notes;   // advisory notes when run
};

namespace detail {

inline const char* arm_label(int a) {
    return a == 0 ? "C" : (a == 1 ? "T1" : "T2");
}

}  // namespace detail

inline void cmd_analyze(const RunConfig& cfg, std::ostream& log = std::cout) {
    validate_run_config(cfg);
    const std::string& dir = cfg.out_dir;
    require_input(paths::panel(dir), "run `simulate` first");
    require_input(paths::profiles(dir), "run `simulate` first");
    require_input(paths::assignment(dir), "run `simulate` first");
    require_input(paths::engagement(dir), "run `simulate` first");

    Panel panel = read_panel_csv(paths::panel(dir));
    std::vector<ParticipantProfile> profiles = read_profiles(paths::profiles(dir));
    std::map<std::string, const ParticipantProfile*> profile_of;
    for (const auto& p : profiles) profile_of[p.participant_id] = &p;
    std::map<std::string, Arm> arm_of = detail::read_assignment_csv(paths::assignment(dir));
    std::vector<EngagementEvent> events =
        detail::read_engagement_csv(paths::engagement(dir));

    CleanResult cleaned = clean_panel(panel, cfg.clean);
    std::map<Resource, std::vector<ParticipantSample>> samples;
    for (Resource r : kResources)
        samples[r] = build_samples(cleaned.panel, cleaned.excluded[r], profile_of, r,
                                   cfg.sim.rounds);

    std::vector<AnalysisOutcome> outcomes;
    auto run = [&](const std::string& name, auto&& fn) {
        AnalysisOutcome o;
        o.name = name;
        try {
            std::string notes = fn();
            o.ran = true;
            o.notes = std::move(notes);
        } catch (const InsufficientDataError& e) {
            o.reason = e.what();
            log << "analyze: skipped " << name << " (" << e.what() << ")\n";
        } catch (const ValidationError& e) {
            o.reason = e.what();
            log << "analyze: skipped " << name << " (" << e.what() << ")\n";
        }
        outcomes.push_back(std::move(o));
    };
    auto skip = [&](const std::string& name, const std::string& reason) {
        outcomes.push_back({name, false, reason, ""});
        log << "analyze: skipped " << name << " (" << reason << ")\n";
    };
    auto fd = [](double v) { return format_double(v); };

    // Adjusted per-resource models, contrasts, and saving rates.
    {
        CsvWriter cw(paths::join(dir, "contrasts.csv"));
        cw.row({"resource", "contrast", "estimate", "se", "tstat", "pvalue", "df",
                "omnibus_stat", "omnibus_p", "n", "n_clusters"});
        CsvWriter sw(paths::join(dir, "saving_rates.csv"));
        sw.row({"resource", "arm", "predicted_mean", "saving_rate", "baseline_mean"});
        for (Resource r : kResources)
            run("adjusted_contrasts[" + std::string(to_string(r)) + "]", [&] {
                AdjustedAnalysis a = fit_adjusted(samples[r]);
                for (const auto& row : a.contrasts.pairwise)
                    cw.row({to_string(r), row.label, fd(row.estimate), fd(row.se),
                            fd(row.tstat), fd(row.pvalue), fd(a.contrasts.df),
                            fd(a.contrasts.omnibus_stat), fd(a.contrasts.omnibus_p),
                            std::to_string(a.n), std::to_string(a.n_clusters)});
                for (int arm = 0; arm < kNumArms; ++arm)
                    sw.row({to_string(r), detail::arm_label(arm), fd(a.rates.predicted[arm]),
                            fd(a.rates.rate[arm]), fd(a.rates.baseline_mean)});
                return std::string();
            });
    }

    // Pooled standardized model.
    {
        CsvWriter pw(paths::join(dir, "pooled_model.csv"));
        pw.row({"term", "estimate", "se", "tstat", "pvalue", "n", "n_clusters", "df"});
        run("pooled_model", [&] {
            PooledFit pooled = pooled_model(samples[Resource::electricity],
                                            samples[Resource::hot_water]);
            for (std::size_t j = 0; j < pooled.fit.names.size(); ++j)
                pw.row({pooled.fit.names[j], fd(pooled.fit.coef(j)), fd(pooled.fit.se[j]),
                        fd(pooled.fit.tstat[j]), fd(pooled.fit.pvalue[j]),
                        std::to_string(pooled.fit.n), std::to_string(pooled.fit.n_clusters),
                        fd(pooled.fit.df_resid)});
            return std::string();
        });
    }

    // Permutation inference on the arm coefficients.
    {
        CsvWriter pw(paths::join(dir, "permutation.csv"));
        pw.row({"resource", "term", "observed", "pvalue", "draws", "degenerate"});
        if (!cfg.analysis.permutation) {
            skip("permutation", "disabled in config");
        } else {
            for (Resource r : kResources)
                for (const std::string term : {"arm_T1", "arm_T2"})
                    run("permutation[" + std::string(to_string(r)) + "," + term + "]", [&] {
                        PermutationResult pr = permutation_contrast(
                            samples[r], term, cfg.analysis.permutation_draws,
                            derive_seed(cfg.seed,
                                        "perm_" + std::string(to_string(r)) + "_" + term));
                        pw.row({to_string(r), term, fd(pr.observed), fd(pr.pvalue),
                                std::to_string(pr.draws), pr.degenerate ? "1" : "0"});
                        return pr.degenerate
                                   ? std::string("degenerate permutation distribution")
                                   : std::string();
                    });
        }
    }

    // Two-way fixed effects difference in differences.
    {
        CsvWriter fw(paths::join(dir, "panel_fe.csv"));
        fw.row({"resource", "term", "estimate", "se", "tstat", "pvalue", "n", "n_units",
                "n_times", "dropped_singletons"});
        for (Resource r : kResources)
            run("panel_fe[" + std::string(to_string(r)) + "]", [&] {
                FEResult fe = fe_difference_in_differences(cleaned.panel, cleaned.excluded[r], r);
                for (std::size_t j = 0; j < fe.names.size(); ++j)
                    fw.row({to_string(r), fe.names[j], fd(fe.coef[j]), fd(fe.se[j]),
                            fd(fe.tstat[j]), fd(fe.pvalue[j]), std::to_string(fe.n),
                            std::to_string(fe.n_units), std::to_string(fe.n_times),
                            std::to_string(fe.dropped_singletons)});
                return std::string();
            });
    }

    // Engagement rates and survival to sustained engagement.
    {
        CsvWriter ew(paths::join(dir, "engagement_rates.csv"));
        ew.row({"arm", "engaged", "total", "rate"});
        run("engagement", [&] {
            EngagementRates rates = engagement_rate(events, arm_of);
            for (int a = 0; a < kNumArms; ++a)
                ew.row({detail::arm_label(a), std::to_string(rates.engaged[a]),
                        std::to_string(rates.total[a]), fd(rates.rate[a])});
            return std::string();
        });
        CsvWriter kw(paths::join(dir, "survival.csv"));
        kw.row({"arm", "time", "at_risk", "events", "survival"});
        run("survival", [&] {
            auto curves = km_survival(events);
            for (const auto& [arm, points] : curves)
                for (const auto& pt : points)
                    kw.row({to_string(arm), fd(pt.time), std::to_string(pt.at_risk),
                            std::to_string(pt.events), fd(pt.survival)});
            return std::string();
        });
    }

    // Cumulative saving-rate trajectories.
    {
        CsvWriter tw(paths::join(dir, "trajectories.csv"));
        tw.row({"resource", "through_round", "rate_C", "rate_T1", "rate_T2", "net_T1",
                "net_T2", "n"});
        for (Resource r : kResources)
            run("trajectories[" + std::string(to_string(r)) + "]", [&] {
                auto points = cumulative_trajectory(cleaned.panel, cleaned.excluded[r],
                                                    profile_of, r, cfg.sim.rounds);
                for (const auto& tp : points)
                    tw.row({to_string(r), std::to_string(tp.through_round), fd(tp.rate[0]),
                            fd(tp.rate[1]), fd(tp.rate[2]), fd(tp.net_t1), fd(tp.net_t2),
                            std::to_string(tp.n)});
                return std::string();
            });
    }

    // Trajectory archetypes among personalized-arm participants.
    {
        CsvWriter aw(paths::join(dir, "archetypes.csv"));
        aw.row({"resource", "archetype", "count", "share", "clustered", "excluded_constant",
                "skipped_incomplete"});
        if (!cfg.analysis.archetypes) {
            skip("archetypes", "disabled in config");
        } else {
            for (Resource r : kResources)
                run("archetypes[" + std::string(to_string(r)) + "]", [&] {
                    ArchetypeShareTable t = archetype_shares(samples[r], r);
                    for (const auto& [archetype, count] : t.counts)
                        aw.row({to_string(r), to_string(archetype), std::to_string(count),
                                fd(t.shares.at(archetype)), std::to_string(t.clustered),
                                std::to_string(t.excluded_constant),
                                std::to_string(t.skipped_incomplete)});
                    return std::string();
                });
        }
    }

    // Individual treatment effects.
    {
        CsvWriter iw(paths::join(dir, "ite.csv"));
        iw.row({"resource", "treatment", "participant_id", "fold", "tau_s", "tau_t", "tau_x",
                "tau_dr", "tau_ensemble"});
        CsvWriter qw(paths::join(dir, "ite_profile.csv"));
        qw.row({"resource", "treatment", "feature", "top_quartile_mean", "rest_mean"});
        if (!cfg.analysis.hte) {
            skip("hte", "disabled in config");
        } else {
            for (Resource r : kResources)
                for (Arm treatment : {Arm::T1, Arm::T2})
                    run("hte[" + std::string(to_string(r)) + "," + to_string(treatment) + "]",
                        [&] {
                            IteTable t = ite_analysis(samples[r], r, treatment, HteConfig{},
                                                      cfg.seed);
                            for (std::size_t i = 0; i < t.ids.size(); ++i)
                                iw.row({to_string(r), to_string(treatment), t.ids[i],
                                        std::to_string(t.ites.fold[i]), fd(t.ites.tau_s[i]),
                                        fd(t.ites.tau_t[i]), fd(t.ites.tau_x[i]),
                                        fd(t.ites.tau_dr[i]), fd(t.ites.tau_ensemble[i])});
                            for (const auto& row : t.top_quartile)
                                qw.row({to_string(r), to_string(treatment), row.name,
                                        fd(row.top_mean), fd(row.rest_mean)});
                            std::string notes;
                            for (const auto& w : t.ites.warnings) {
                                if (!notes.empty()) notes += "; ";
                                notes += w;
                            }
                            return notes;
                        });
        }
    }

    // Message content profiles.
    {
        CsvWriter mw(paths::join(dir, "content_profiles.csv"));
        std::vector<std::string> header = {"message_id", "participant_id", "round",
                                           "arm",        "arm_class",      "total"};
        for (int c = 0; c < kNumContentCategories; ++c)
            header.push_back(std::string("count_") +
                             to_string(static_cast<ContentCategory>(c)));
        for (int c = 0; c < kNumContentCategories; ++c)
            header.push_back(std::string("share_") +
                             to_string(static_cast<ContentCategory>(c)));
        mw.row(header);
        CsvWriter cw(paths::join(dir, "content_summary.csv"));
        cw.row({"row_type", "group", "category", "value", "messages"});
        if (!cfg.analysis.content) {
            skip("content", "disabled in config");
        } else {
            std::vector<std::pair<int, std::string>> bundle_files;
            for (int r = 1; r <= cfg.sim.rounds; ++r)
                if (std::filesystem::exists(paths::bundles_round(dir, r)))
                    bundle_files.emplace_back(r, paths::bundles_round(dir, r));
            if (bundle_files.empty())
                throw DependencyError("no bundle files in " + dir +
                                      "; run `nudge --round N` first");
            run("content", [&] {
                KeywordDictionaries dicts = load_dictionaries(cfg.dictionaries_path);
                std::vector<ContentProfile> all;
                std::vector<std::string> meta_participant, meta_arm;
                for (const auto& [round, path] : bundle_files) {
                    for (const auto& j : read_jsonl(path)) {
                        std::string pid = j.at("participant_id").get<std::string>();
                        Arm arm = arm_from_string(j.at("arm").get<std::string>());
                        ContentProfile p = count_keywords(
                            j.at("message_text").get<std::string>(), dicts, MatchMode::tokens);
                        p.message_id = pid + "-r" + std::to_string(round);
                        p.round = round;
                        p.arm_class = arm == Arm::T2 ? "personalized" : "conventional";
                        all.push_back(std::move(p));
                        meta_participant.push_back(pid);
                        meta_arm.push_back(to_string(arm));
                    }
                }
                for (std::size_t i = 0; i < all.size(); ++i) {
                    const ContentProfile& p = all[i];
                    std::vector<std::string> row = {p.message_id,      meta_participant[i],
                                                    std::to_string(p.round), meta_arm[i],
                                                    p.arm_class,       std::to_string(p.total())};
                    for (int c = 0; c < kNumContentCategories; ++c)
                        row.push_back(std::to_string(p.counts[c]));
                    for (int c = 0; c < kNumContentCategories; ++c)
                        row.push_back(p.has_shares ? fd(p.shares[c]) : std::string());
                    mw.row(row);
                }

                std::vector<ContentProfile> personalized;
                for (const auto& p : all)
                    if (p.arm_class == "personalized") personalized.push_back(p);
                if (!personalized.empty()) {
                    DriftTable drift = round_drift(personalized);
                    const char* stage_names[3] = {"rounds_1_2", "rounds_3_4", "round_5"};
                    for (int s = 0; s < 3; ++s)
                        for (int c = 0; c < kNumContentCategories; ++c)
                            cw.row({"stage_mean_count", stage_names[s],
                                    to_string(static_cast<ContentCategory>(c)),
                                    fd(drift.stage_mean_counts[s][c]),
                                    std::to_string(drift.stage_messages[s])});
                    for (int c = 0; c < kNumContentCategories; ++c)
                        cw.row({"monotone_increase", "personalized",
                                to_string(static_cast<ContentCategory>(c)),
                                drift.monotone_increase[c] ? "1" : "0", ""});
                }
                GroupShares shares = group_shares(all);
                for (const auto& [group, vec] : shares.shares)
                    for (int c = 0; c < kNumContentCategories; ++c)
                        cw.row({"mean_share", group,
                                to_string(static_cast<ContentCategory>(c)), fd(vec[c]),
                                std::to_string(shares.messages_used.at(group))});
                return std::string();
            });
        }
    }

    // Predictor importance, phase comparison, and model selection.
    {
        CsvWriter iw(paths::join(dir, "importance.csv"));
        iw.row({"resource", "phase", "row_type", "name", "category", "importance",
                "degenerate", "n"});
        CsvWriter sw(paths::join(dir, "model_selection.csv"));
        sw.row({"resource", "candidate", "cv_rmse", "winner", "note"});
        if (!cfg.analysis.importance) {
            skip("importance", "disabled in config");
        } else {
            std::map<std::string, ReplyStats> replies = reply_stats(events);
            std::vector<PredictorSpec> specs = predictor_specs();
            for (Resource r : kResources)
                run("importance[" + std::string(to_string(r)) + "]", [&] {
                    PredictorData data = predictor_data(samples[r], replies, cfg.sim.rounds);
                    if (data.ids.size() < 20)
                        throw InsufficientDataError(
                            "importance: fewer than 20 usable participants");
                    auto category_of = [&](const std::string& name) {
                        for (const auto& s : specs)
                            if (s.name == name) return s.category;
                        return std::string();
                    };
                    auto emit = [&](const std::string& phase, const ImportanceProfile& prof) {
                        for (std::size_t j = 0; j < prof.feature_names.size(); ++j)
                            iw.row({to_string(r), phase, "feature", prof.feature_names[j],
                                    category_of(prof.feature_names[j]),
                                    fd(prof.feature_importance[j]),
                                    prof.degenerate ? "1" : "0", std::to_string(prof.n)});
                        for (const auto& [category, value] : prof.category_importance)
                            iw.row({to_string(r), phase, "category", category, "", fd(value),
                                    prof.degenerate ? "1" : "0", std::to_string(prof.n)});
                    };
                    BoostConfig boost;
                    std::string label(to_string(r));
                    ImportanceProfile overall =
                        fit_importance(data.X, data.y_overall, specs, boost,
                                       derive_seed(cfg.seed, "importance_" + label));
                    emit("overall", overall);
                    PhaseComparison phases =
                        phase_comparison(data.X, data.y_early, data.y_late, specs, boost,
                                         derive_seed(cfg.seed, "phases_" + label));
                    emit("early", phases.early);
                    emit("late", phases.late);

                    ModelSelection sel = select_model(data.X, data.y_overall, 5,
                                                      derive_seed(cfg.seed, "model_" + label));
                    for (const auto& cand : sel.candidates)
                        sw.row({to_string(r), cand.name, fd(cand.cv_rmse),
                                cand.name == sel.winner ? "1" : "0",
                                cand.name == sel.winner ? sel.note : ""});
                    return std::string();
                });
        }
    }

    // Manifest.
    nlohmann::json inputs;
    for (const std::string& p :
         {paths::panel(dir), paths::profiles(dir), paths::assignment(dir),
          paths::engagement(dir)})
        inputs[p] = digest_file(p);
    for (int r = 1; r <= cfg.sim.rounds; ++r)
        if (std::filesystem::exists(paths::bundles_round(dir, r)))
            inputs[paths::bundles_round(dir, r)] = digest_file(paths::bundles_round(dir, r));
    if (cfg.analysis.content && std::filesystem::exists(cfg.dictionaries_path))
        inputs[cfg.dictionaries_path] = digest_file(cfg.dictionaries_path);

    nlohmann::json analyses = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json entry = {{"name", o.name}, {"status", o.ran ? "ran" : "skipped"}};
        if (!o.reason.empty()) entry["reason"] = o.reason;
        if (!o.notes.empty()) entry["notes"] = o.notes;
        analyses.push_back(std::move(entry));
    }
    nlohmann::json manifest = {
        {"seed", cfg.seed},
        {"module_versions", module_versions()},
        {"inputs", inputs},
        {"analyses", analyses},
        {"settings",
         {{"permutation_draws", cfg.analysis.permutation_draws},
          {"hte", cfg.analysis.hte},
          {"permutation", cfg.analysis.permutation},
          {"content", cfg.analysis.content},
          {"importance", cfg.analysis.importance},
          {"archetypes", cfg.analysis.archetypes},
          {"iqr_multiplier", cfg.clean.iqr_multiplier},
          {"max_missing_share", cfg.clean.max_missing_share},
          {"rounds", cfg.sim.rounds}}}};
    {
        std::ofstream mf(paths::manifest(dir));
        if (!mf) throw IoError("cannot write " + paths::manifest(dir));
        mf << manifest.dump(2) << '\n';
    }
    int ran = 0;
    for (const auto& o : outcomes) ran += o.ran ? 1 : 0;
    log << "analyze: " << ran << "/" << outcomes.size() << " analyses ran; manifest at "
        << paths::manifest(dir) << "\n";
}

// ---------------------------------------------------------------------------
// report

inline void cmd_report(const RunConfig& cfg, std::ostream& log = std::cout) {
    validate_run_config(cfg);
    const std::string& dir = cfg.out_dir;
    require_input(paths::manifest(dir), "run `analyze` first");
    require_input(paths::join(dir, "contrasts.csv"), "run `analyze` first");
    require_input(paths::join(dir, "saving_rates.csv"), "run `analyze` first");
    require_input(paths::join(dir, "engagement_rates.csv"), "run `analyze` first");

    std::ostringstream text;
    char buf[160];
    auto line = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof(buf), fmt, args...);
        text << buf << '\n';
    };

    text << "trial summary\n=============\n";
    {
        std::ifstream mf(paths::manifest(dir));
        nlohmann::json manifest;
        mf >> manifest;
        text << "seed " << manifest.at("seed").get<std::uint64_t>() << ", nudgekit "
             << kNudgekitVersion << "\n\n";
    }

    {
        text << "covariate-adjusted contrasts (cluster-robust)\n";
        CsvTable t = read_csv(paths::join(dir, "contrasts.csv"));
        std::size_t res = t.col("resource"), con = t.col("contrast"), est = t.col("estimate"),
                    p = t.col("pvalue"), op = t.col("omnibus_p");
        for (const auto& row : t.rows)
            line("  %-11s %-6s estimate %8.4f  p=%.4f  (omnibus p=%.4f)",
                 row[res].c_str(), row[con].c_str(), std::stod(row[est]),
                 std::stod(row[p]), std::stod(row[op]));
        text << '\n';
    }
    {
        text << "adjusted saving rates\n";
        CsvTable t = read_csv(paths::join(dir, "saving_rates.csv"));
        std::size_t res = t.col("resource"), arm = t.col("arm"), rate = t.col("saving_rate");
        for (const auto& row : t.rows)
            line("  %-11s %-3s %6.1f%%", row[res].c_str(), row[arm].c_str(),
                 100.0 * std::stod(row[rate]));
        text << '\n';
    }
    {
        text << "engagement (opened a report and replied at least once)\n";
        CsvTable t = read_csv(paths::join(dir, "engagement_rates.csv"));
        std::size_t arm = t.col("arm"), engaged = t.col("engaged"), total = t.col("total"),
                    rate = t.col("rate");
        for (const auto& row : t.rows)
            line("  %-3s %5.1f%% (%s/%s)", row[arm].c_str(), 100.0 * std::stod(row[rate]),
                 row[engaged].c_str(), row[total].c_str());
        text << '\n';
    }
    if (std::filesystem::exists(paths::join(dir, "archetypes.csv"))) {
        CsvTable t = read_csv(paths::join(dir, "archetypes.csv"));
        if (!t.rows.empty()) {
            text << "saving archetypes (personalized arm)\n";
            std::size_t res = t.col("resource"), arch = t.col("archetype"),
                        share = t.col("share");
            for (const auto& row : t.rows)
                line("  %-11s %-8s %5.1f%%", row[res].c_str(), row[arch].c_str(),
                     100.0 * std::stod(row[share]));
            text << '\n';
        }
    }
    if (std::filesystem::exists(paths::join(dir, "trajectories.csv"))) {
        CsvTable t = read_csv(paths::join(dir, "trajectories.csv"));
        if (!t.rows.empty()) {
            text << "net saving rates by cumulative round (T2 - C)\n";
            std::size_t res = t.col("resource"), k = t.col("through_round"),
                        net = t.col("net_T2");
            for (const auto& row : t.rows)
                line("  %-11s through round %s: %6.1f pp", row[res].c_str(), row[k].c_str(),
                     100.0 * std::stod(row[net]));
            text << '\n';
        }
    }

    std::ofstream rf(paths::report(dir));
    if (!rf) throw IoError("cannot write " + paths::report(dir));
    rf << text.str();
    log << text.str();
}

}  // namespace nudgekit
