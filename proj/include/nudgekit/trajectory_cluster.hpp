#pragma once
// Round-level consumption-change trajectories clustered into behavioral
// archetypes: direction split, complete-linkage agglomeration on correlation
// distance, and rule-based archetype labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nudgekit/common.hpp"

namespace nudgekit {

enum class Direction { decrease, increase };

inline const char* to_string(Direction d) {
    return d == Direction::decrease ? "decrease" : "increase";
}

struct Trajectory {
    std::string participant_id;
    std::array<double, 3> rel{};  // early, middle, late relative change vs baseline
    Direction direction = Direction::decrease;
};

// Phase values from per-round means: early = mean(r1, r2), middle = mean(r3,
// r4), late = r5, each expressed as (phase - baseline) / baseline.
inline Trajectory make_trajectory(const std::string& participant_id, double baseline_mean,
                                  const std::array<double, kNumRounds>& round_means) {
    if (!(baseline_mean > 0.0))
        throw ValidationError("trajectory: baseline mean must be positive for " + participant_id);
    Trajectory t;
    t.participant_id = participant_id;
    double early = 0.5 * (round_means[0] + round_means[1]);
    double middle = 0.5 * (round_means[2] + round_means[3]);
    double late = round_means[4];
    t.rel = {(early - baseline_mean) / baseline_mean, (middle - baseline_mean) / baseline_mean,
             (late - baseline_mean) / baseline_mean};
    double mean = (t.rel[0] + t.rel[1] + t.rel[2]) / 3.0;
    t.direction = mean > 0.0 ? Direction::increase : Direction::decrease;
    return t;
}

inline bool is_constant(const std::array<double, 3>& v, double eps = 1e-12) {
    double lo = std::min({v[0], v[1], v[2]}), hi = std::max({v[0], v[1], v[2]});
    return hi - lo <= eps * std::max(1.0, std::fabs(hi));
}

inline double corr_distance(const std::array<double, 3>& x, const std::array<double, 3>& y) {
    auto stats = [](const std::array<double, 3>& v) {
        double mean = (v[0] + v[1] + v[2]) / 3.0;
        double ss = 0.0;
        for (double a : v) ss += (a - mean) * (a - mean);
        return std::make_pair(mean, ss);
    };
    auto [mx, sx] = stats(x);
    auto [my, sy] = stats(y);
    // spread at rounding noise of the mean is constant for all purposes here
    auto constant = [](double mean, double ss) { return ss <= 1e-24 * (1.0 + mean * mean); };
    if (constant(mx, sx) || constant(my, sy))
        throw ValidationError("corr_distance: correlation undefined for a constant vector");
    double cov = 0.0;
    for (int i = 0; i < 3; ++i) cov += (x[i] - mx) * (y[i] - my);
    double r = cov / std::sqrt(sx * sy);
    r = std::clamp(r, -1.0, 1.0);
    return 1.0 - r;
}

// ---------------------------------------------------------------------------
// Complete-linkage agglomeration

struct MergeStep {
    int a = 0;  // smaller cluster id
    int b = 0;
    int merged = 0;  // id of the new cluster: n + step index
    double distance = 0.0;
};

struct ClusterResult {
    std::vector<MergeStep> steps;
    std::vector<std::vector<int>> clusters;  // item indices per final cluster
};

// Merges the closest pair (complete linkage) until `target` clusters remain,
// then keeps merging while the minimal distance stays below
// `merge_threshold` (the paper folded near-identical terminal shapes).
inline ClusterResult complete_linkage_cluster(const std::vector<std::array<double, 3>>& items,
                                              int target, double merge_threshold = 0.05) {
    const int n = static_cast<int>(items.size());
    if (target < 1) throw ValidationError("cluster: target must be at least 1");
    if (n < target)
        throw InsufficientDataError("cluster: " + std::to_string(n) +
                                    " trajectories for target " + std::to_string(target));
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = corr_distance(items[i], items[j]);

    struct Active {
        int id;
        std::vector<int> members;
    };
    std::vector<Active> active;
    for (int i = 0; i < n; ++i) active.push_back({i, {i}});

    // Complete-linkage distance between active clusters, kept incrementally
    // via the Lance-Williams max rule.
    std::map<std::pair<int, int>, double> cdist;
    auto key = [](int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) cdist[key(i, j)] = dist[i][j];

    ClusterResult out;
    int next_id = n;
    while (static_cast<int>(active.size()) > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                int ida = std::min(active[i].id, active[j].id);
                int idb = std::max(active[i].id, active[j].id);
                double d = cdist.at(key(ida, idb));
                bool better = d < best;
                if (!better && d == best) {
                    int cura = std::min(active[bi].id, active[bj].id);
                    int curb = std::max(active[bi].id, active[bj].id);
                    better = ida < cura || (ida == cura && idb < curb);
                }
                if (better) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (static_cast<int>(active.size()) <= target && !(best < merge_threshold)) break;

        MergeStep step;
        step.a = std::min(active[bi].id, active[bj].id);
        step.b = std::max(active[bi].id, active[bj].id);
        step.merged = next_id++;
        step.distance = best;
        out.steps.push_back(step);

        Active merged;
        merged.id = step.merged;
        merged.members = active[bi].members;
        merged.members.insert(merged.members.end(), active[bj].members.begin(),
                              active[bj].members.end());
        std::sort(merged.members.begin(), merged.members.end());
        int ida = active[bi].id, idb = active[bj].id;
        active.erase(active.begin() + std::max(bi, bj));
        active.erase(active.begin() + std::min(bi, bj));
        for (const auto& other : active) {
            double da = cdist.at(key(ida, other.id));
            double db = cdist.at(key(idb, other.id));
            cdist[key(merged.id, other.id)] = std::max(da, db);
        }
        active.push_back(std::move(merged));
    }

    std::sort(active.begin(), active.end(), [](const Active& a, const Active& b) {
        return a.members.front() < b.members.front();
    });
    for (auto& cluster : active) out.clusters.push_back(std::move(cluster.members));
    return out;
}

// ---------------------------------------------------------------------------
// Archetype labeling

struct ArchetypeAssignment {
    std::string participant_id;
    Direction direction = Direction::decrease;
    Archetype archetype = Archetype::gradual;
    std::array<double, 3> cluster_mean{};
    std::array<double, 3> rel{};
};

struct ArchetypeConfig {
    double merge_threshold = 0.05;
    int decrease_targets = 3;
    int increase_targets = 2;
    double constant_eps = 1e-9;
};

struct ArchetypeResult {
    std::vector<ArchetypeAssignment> assignments;
    std::vector<std::string> excluded;  // constant ~zero trajectories
};

namespace detail {

inline std::array<double, 3> cluster_mean(const std::vector<std::array<double, 3>>& items,
                                          const std::vector<int>& members) {
    std::array<double, 3> mean{};
    for (int i : members)
        for (int p = 0; p < 3; ++p) mean[p] += items[i][p];
    for (int p = 0; p < 3; ++p) mean[p] /= static_cast<double>(members.size());
    return mean;
}

}  // namespace detail

inline ArchetypeResult label_archetypes(const std::vector<Trajectory>& trajectories,
                                        const ArchetypeConfig& config = {}) {
    ArchetypeResult out;
    std::vector<const Trajectory*> decrease, increase;
    for (const auto& t : trajectories) {
        if (is_constant(t.rel, config.constant_eps)) {
            // Pearson is undefined on constants; pre-assign by sign.
            double level = t.rel[0];
            if (std::fabs(level) <= config.constant_eps) {
                out.excluded.push_back(t.participant_id);
            } else {
                ArchetypeAssignment a;
                a.participant_id = t.participant_id;
                a.direction = level < 0.0 ? Direction::decrease : Direction::increase;
                a.archetype = level < 0.0 ? Archetype::gradual : Archetype::adverse;
                a.cluster_mean = t.rel;
                a.rel = t.rel;
                out.assignments.push_back(std::move(a));
            }
            continue;
        }
        (t.direction == Direction::decrease ? decrease : increase).push_back(&t);
    }

    auto run_side = [&](const std::vector<const Trajectory*>& side, Direction direction,
                        int target) {
        if (side.empty()) return;
        std::vector<std::array<double, 3>> items;
        for (const auto* t : side) items.push_back(t->rel);
        ClusterResult clusters;
        if (static_cast<int>(side.size()) <= target) {
            for (std::size_t i = 0; i < side.size(); ++i)
                clusters.clusters.push_back({static_cast<int>(i)});
        } else {
            clusters = complete_linkage_cluster(items, target, config.merge_threshold);
        }

        std::vector<std::array<double, 3>> means;
        for (const auto& members : clusters.clusters)
            means.push_back(detail::cluster_mean(items, members));

        std::vector<Archetype> labels(clusters.clusters.size());
        if (direction == Direction::decrease) {
            // Quick: most negative early mean (ties by cluster order, which is
            // already deterministic by smallest member index).
            std::size_t quick = 0;
            for (std::size_t c = 1; c < means.size(); ++c)
                if (means[c][0] < means[quick][0]) quick = c;
            for (std::size_t c = 0; c < means.size(); ++c) {
                if (c == quick)
                    labels[c] = Archetype::quick;
                else if (means[c][0] < 0.0 && means[c][2] > means[c][1])
                    labels[c] = Archetype::rebound;
                else
                    labels[c] = Archetype::gradual;
            }
        } else {
            for (std::size_t c = 0; c < means.size(); ++c)
                labels[c] = means[c][2] < means[c][0] ? Archetype::late : Archetype::adverse;
        }

        for (std::size_t c = 0; c < clusters.clusters.size(); ++c) {
            for (int i : clusters.clusters[c]) {
                ArchetypeAssignment a;
                a.participant_id = side[i]->participant_id;
                a.direction = direction;
                a.archetype = labels[c];
                a.cluster_mean = means[c];
                a.rel = side[i]->rel;
                out.assignments.push_back(std::move(a));
            }
        }
    };
    run_side(decrease, Direction::decrease, config.decrease_targets);
    run_side(increase, Direction::increase, config.increase_targets);

    std::sort(out.assignments.begin(), out.assignments.end(),
              [](const ArchetypeAssignment& a, const ArchetypeAssignment& b) {
                  return a.participant_id < b.participant_id;
              });
    return out;
}

}  // namespace nudgekit
