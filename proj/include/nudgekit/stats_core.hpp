#pragma once
// Regression machinery for the trial analysis: covariate-adjusted OLS with
// iid or cluster-robust errors, arm contrasts, adjusted saving rates, pooled
// standardized fits, permutation tests, two-way fixed effects, and
// Kaplan-Meier curves.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nudgekit/common.hpp"
#include "nudgekit/dist.hpp"
#include "nudgekit/rng.hpp"

namespace nudgekit {

struct Design {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;  // one vector per named column

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    void add(std::string name, std::vector<double> column) {
        if (!columns.empty() && column.size() != rows())
            throw ValidationError("design: column " + name + " has mismatched length");
        names.push_back(std::move(name));
        columns.push_back(std::move(column));
    }
    int index_of(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return static_cast<int>(j);
        return -1;
    }
};

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    std::vector<double> se;
    std::vector<double> tstat;
    std::vector<double> pvalue;
    std::vector<double> residuals;
    int n = 0;
    int k = 0;
    double df_resid = 0.0;
    double sigma2 = 0.0;
    std::string se_type = "iid";
    int n_clusters = 0;

    double coef_of(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return coef(static_cast<Eigen::Index>(j));
        throw ValidationError("fit: no coefficient named " + name);
    }
    int index_of(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return static_cast<int>(j);
        throw ValidationError("fit: no coefficient named " + name);
    }
};

inline FitResult fit_ols(const Design& design, const std::vector<double>& y,
                         const std::vector<std::string>& cluster_ids = {}) {
    const int n = static_cast<int>(y.size());
    const int k = static_cast<int>(design.names.size());
    if (k == 0) throw ValidationError("fit_ols: empty design");
    if (design.rows() != y.size()) throw ValidationError("fit_ols: y/X length mismatch");
    if (!cluster_ids.empty() && cluster_ids.size() != y.size())
        throw ValidationError("fit_ols: cluster id length mismatch");
    if (n <= k) throw InsufficientDataError("fit_ols: n <= k");

    Eigen::MatrixXd X(n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i) X(i, j) = design.columns[j][i];
    Eigen::VectorXd yv(n);
    for (int i = 0; i < n; ++i) yv(i) = y[i];

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < k) {
        const auto& perm = qr.colsPermutation().indices();
        std::string offenders;
        for (int j = qr.rank(); j < k; ++j) {
            if (!offenders.empty()) offenders += ", ";
            offenders += design.names[perm(j)];
        }
        throw RankDeficientError("fit_ols: rank " + std::to_string(qr.rank()) + " < " +
                                 std::to_string(k) + "; drop or recode: " + offenders);
    }

    FitResult fit;
    fit.names = design.names;
    fit.coef = qr.solve(yv);
    fit.n = n;
    fit.k = k;
    Eigen::VectorXd resid = yv - X * fit.coef;
    fit.residuals.assign(resid.data(), resid.data() + n);
    double rss = resid.squaredNorm();
    fit.sigma2 = rss / static_cast<double>(n - k);

    Eigen::MatrixXd xtx_inv = (X.transpose() * X).ldlt().solve(
        Eigen::MatrixXd::Identity(k, k));

    if (cluster_ids.empty()) {
        fit.se_type = "iid";
        fit.vcov = fit.sigma2 * xtx_inv;
        fit.df_resid = n - k;
    } else {
        fit.se_type = "cluster";
        std::map<std::string, std::vector<int>> groups;
        for (int i = 0; i < n; ++i) groups[cluster_ids[i]].push_back(i);
        const int g = static_cast<int>(groups.size());
        if (g < 2) throw InsufficientDataError("fit_ols: need at least 2 clusters");
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
        for (const auto& [id, idx] : groups) {
            Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
            for (int i : idx) score += X.row(i).transpose() * resid(i);
            meat += score * score.transpose();
        }
        double correction = (static_cast<double>(g) / (g - 1.0)) *
                            ((n - 1.0) / static_cast<double>(n - k));
        fit.vcov = correction * xtx_inv * meat * xtx_inv;
        fit.df_resid = g - 1;
        fit.n_clusters = g;
    }

    fit.se.resize(k);
    fit.tstat.resize(k);
    fit.pvalue.resize(k);
    for (int j = 0; j < k; ++j) {
        fit.se[j] = std::sqrt(std::max(0.0, fit.vcov(j, j)));
        fit.tstat[j] = fit.se[j] > 0.0 ? fit.coef(j) / fit.se[j] : 0.0;
        fit.pvalue[j] = fit.se[j] > 0.0 ? t_two_sided_p(fit.tstat[j], fit.df_resid) : 1.0;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Arm contrasts

struct ContrastRow {
    std::string label;
    double estimate = 0.0;
    double se = 0.0;
    double tstat = 0.0;
    double pvalue = 1.0;
};

struct ContrastResult {
    double omnibus_stat = 0.0;  // Wald chi-square, 2 df
    double omnibus_p = 1.0;
    std::vector<ContrastRow> pairwise;  // T1-C, T2-C, T2-T1
    double df = 0.0;
};

inline ContrastResult arm_contrasts(const FitResult& fit, const std::string& t1_name = "arm_T1",
                                    const std::string& t2_name = "arm_T2") {
    int j1 = fit.index_of(t1_name);
    int j2 = fit.index_of(t2_name);
    ContrastResult out;
    out.df = fit.df_resid;

    Eigen::Vector2d b(fit.coef(j1), fit.coef(j2));
    Eigen::Matrix2d v;
    v << fit.vcov(j1, j1), fit.vcov(j1, j2), fit.vcov(j2, j1), fit.vcov(j2, j2);
    double det = v.determinant();
    if (!(std::fabs(det) > 0.0))
        throw ValidationError("arm_contrasts: singular contrast covariance");
    out.omnibus_stat = b.dot(v.inverse() * b);
    out.omnibus_p = chi2_sf(out.omnibus_stat, 2.0);

    auto add = [&](const std::string& label, double est, double var) {
        ContrastRow row;
        row.label = label;
        row.estimate = est;
        row.se = std::sqrt(std::max(0.0, var));
        row.tstat = row.se > 0.0 ? est / row.se : 0.0;
        row.pvalue = row.se > 0.0 ? t_two_sided_p(row.tstat, fit.df_resid) : 1.0;
        out.pairwise.push_back(row);
    };
    add("T1-C", b(0), v(0, 0));
    add("T2-C", b(1), v(1, 1));
    add("T2-T1", b(1) - b(0), v(0, 0) + v(1, 1) - 2.0 * v(0, 1));
    return out;
}

// ---------------------------------------------------------------------------
// Adjusted saving rates

struct SavingRates {
    std::array<double, kNumArms> predicted{};  // adjusted means by arm, C/T1/T2
    std::array<double, kNumArms> rate{};       // 1 - predicted / baseline mean
    double baseline_mean = 0.0;
};

// `covariate_means` aligns with fit.names; the intercept entry must be 1 and
// the arm dummy entries are overridden per arm.
inline SavingRates saving_rates(const FitResult& fit, std::vector<double> covariate_means,
                                double baseline_mean, const std::string& t1_name = "arm_T1",
                                const std::string& t2_name = "arm_T2") {
    if (covariate_means.size() != fit.names.size())
        throw ValidationError("saving_rates: covariate mean vector length mismatch");
    if (!(baseline_mean > 0.0))
        throw ValidationError("saving_rates: baseline mean must be positive");
    int j1 = fit.index_of(t1_name);
    int j2 = fit.index_of(t2_name);
    SavingRates out;
    out.baseline_mean = baseline_mean;
    for (int arm = 0; arm < kNumArms; ++arm) {
        std::vector<double> x = covariate_means;
        x[j1] = arm == 1 ? 1.0 : 0.0;
        x[j2] = arm == 2 ? 1.0 : 0.0;
        double pred = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) pred += fit.coef(j) * x[j];
        out.predicted[arm] = pred;
        out.rate[arm] = 1.0 - pred / baseline_mean;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pooled standardized model

struct ResourceBlock {
    Resource resource = Resource::electricity;
    std::vector<double> y;
    Design design;
    std::vector<std::string> cluster_ids;  // participant ids; pooled fit clusters on these
};

struct PooledFit {
    FitResult fit;
    std::map<Resource, std::pair<double, double>> outcome_moments;  // mean, sd per resource
};

// Stacks per-resource blocks after z-scoring the outcome (and the named
// covariate columns) within each resource. No resource indicator enters the
// design, so a single-block pool is a pure linear reparameterization of the
// per-resource fit.
inline PooledFit pool_standardized(const std::vector<ResourceBlock>& blocks,
                                   const std::vector<std::string>& standardize_columns = {}) {
    if (blocks.empty()) throw ValidationError("pool_standardized: no blocks");
    const auto& names = blocks.front().design.names;
    for (const auto& block : blocks)
        if (block.design.names != names)
            throw ValidationError("pool_standardized: blocks disagree on design columns");

    auto moments = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        double sd = v.size() > 1 ? std::sqrt(ss / (static_cast<double>(v.size()) - 1.0)) : 0.0;
        return std::make_pair(mean, sd);
    };

    PooledFit out;
    Design stacked;
    for (const auto& name : names) stacked.add(name, {});
    std::vector<double> y_all;
    std::vector<std::string> clusters_all;
    for (const auto& block : blocks) {
        if (block.y.empty()) throw InsufficientDataError("pool_standardized: empty block");
        auto [mean, sd] = moments(block.y);
        if (!(sd > 0.0))
            throw ValidationError("pool_standardized: degenerate outcome in " +
                                  to_string(block.resource));
        out.outcome_moments[block.resource] = {mean, sd};
        for (double v : block.y) y_all.push_back((v - mean) / sd);
        for (std::size_t j = 0; j < names.size(); ++j) {
            const auto& column = block.design.columns[j];
            bool standardize = std::find(standardize_columns.begin(), standardize_columns.end(),
                                         names[j]) != standardize_columns.end();
            if (standardize) {
                auto [cmean, csd] = moments(column);
                if (!(csd > 0.0))
                    throw ValidationError("pool_standardized: degenerate covariate " + names[j]);
                for (double v : column) stacked.columns[j].push_back((v - cmean) / csd);
            } else {
                for (double v : column) stacked.columns[j].push_back(v);
            }
        }
        clusters_all.insert(clusters_all.end(), block.cluster_ids.begin(),
                            block.cluster_ids.end());
    }
    out.fit = fit_ols(stacked, y_all, clusters_all);
    return out;
}

// ---------------------------------------------------------------------------
// Permutation test

struct PermutationResult {
    double observed = 0.0;
    double pvalue = 1.0;
    int draws = 0;
    bool degenerate = false;  // every permuted |stat| >= |observed|, p forced to 1
};

// Shuffles arm labels across clusters, preserving the label multiset, and
// recomputes the statistic for each draw.
inline PermutationResult permutation_test(
    const std::vector<std::pair<std::string, Arm>>& cluster_arms,
    const std::function<double(const std::map<std::string, Arm>&)>& statistic, int draws,
    std::uint64_t seed) {
    if (draws <= 0) throw ValidationError("permutation_test: draws must be positive");
    std::map<std::string, Arm> arms;
    for (const auto& [id, arm] : cluster_arms) arms[id] = arm;
    if (arms.size() != cluster_arms.size())
        throw ValidationError("permutation_test: duplicate cluster ids");
    PermutationResult out;
    out.observed = statistic(arms);
    out.draws = draws;

    std::vector<Arm> labels;
    labels.reserve(cluster_arms.size());
    for (const auto& [id, arm] : cluster_arms) labels.push_back(arm);
    Rng rng(derive_seed(seed, "permutation"));
    int hits = 0;
    for (int b = 0; b < draws; ++b) {
        rng.shuffle(labels);
        std::map<std::string, Arm> shuffled;
        for (std::size_t i = 0; i < cluster_arms.size(); ++i)
            shuffled[cluster_arms[i].first] = labels[i];
        if (std::fabs(statistic(shuffled)) >= std::fabs(out.observed) - 1e-12) ++hits;
    }
    out.pvalue = (1.0 + hits) / (static_cast<double>(draws) + 1.0);
    out.degenerate = hits == draws;
    return out;
}

// ---------------------------------------------------------------------------
// Two-way fixed effects

struct FEPanelRow {
    std::string unit;
    int time = 0;
    double y = 0.0;
    std::vector<double> x;
};

struct FEResult {
    std::vector<std::string> names;
    std::vector<double> coef;
    std::vector<double> se;
    std::vector<double> tstat;
    std::vector<double> pvalue;
    int n = 0;
    int n_units = 0;
    int n_times = 0;
    int dropped_singletons = 0;
    double df_resid = 0.0;
};

inline FEResult panel_fe(const std::vector<FEPanelRow>& rows,
                         const std::vector<std::string>& names) {
    FEResult out;
    out.names = names;
    const int k = static_cast<int>(names.size());
    if (k == 0) throw ValidationError("panel_fe: no regressors");

    std::map<std::string, int> unit_count;
    for (const auto& row : rows) {
        if (static_cast<int>(row.x.size()) != k)
            throw ValidationError("panel_fe: regressor length mismatch");
        ++unit_count[row.unit];
    }
    std::vector<FEPanelRow> kept;
    for (const auto& row : rows) {
        if (unit_count[row.unit] < 2) continue;
        kept.push_back(row);
    }
    out.dropped_singletons = static_cast<int>(rows.size() - kept.size());
    if (kept.size() < static_cast<std::size_t>(k) + 2)
        throw InsufficientDataError("panel_fe: too few observations after dropping singletons");

    std::map<std::string, int> units;
    std::map<int, int> times;
    for (const auto& row : kept) {
        units.emplace(row.unit, static_cast<int>(units.size()));
        times.emplace(row.time, static_cast<int>(times.size()));
    }
    out.n = static_cast<int>(kept.size());
    out.n_units = static_cast<int>(units.size());
    out.n_times = static_cast<int>(times.size());

    const int n = out.n;
    std::vector<std::vector<double>> cols(k + 1, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
        cols[0][i] = kept[i].y;
        for (int j = 0; j < k; ++j) cols[j + 1][i] = kept[i].x[j];
    }
    std::vector<int> uidx(n), tidx(n);
    for (int i = 0; i < n; ++i) {
        uidx[i] = units[kept[i].unit];
        tidx[i] = times[kept[i].time];
    }
    std::vector<int> unit_sizes(out.n_units, 0), time_sizes(out.n_times, 0);
    for (int i = 0; i < n; ++i) {
        ++unit_sizes[uidx[i]];
        ++time_sizes[tidx[i]];
    }

    // Alternating within transformation until both margins are centered.
    for (int iter = 0; iter < 200; ++iter) {
        double worst = 0.0;
        for (auto& col : cols) {
            std::vector<double> umean(out.n_units, 0.0);
            for (int i = 0; i < n; ++i) umean[uidx[i]] += col[i];
            for (int u = 0; u < out.n_units; ++u) umean[u] /= unit_sizes[u];
            for (int i = 0; i < n; ++i) col[i] -= umean[uidx[i]];
            std::vector<double> tmean(out.n_times, 0.0);
            for (int i = 0; i < n; ++i) tmean[tidx[i]] += col[i];
            for (int t = 0; t < out.n_times; ++t) {
                tmean[t] /= time_sizes[t];
                worst = std::max(worst, std::fabs(tmean[t]));
            }
            for (int i = 0; i < n; ++i) col[i] -= tmean[tidx[i]];
        }
        if (worst < 1e-12) break;
    }

    Design design;
    for (int j = 0; j < k; ++j) design.add(names[j], cols[j + 1]);
    std::vector<double> y = cols[0];
    std::vector<std::string> cluster_ids;
    cluster_ids.reserve(n);
    for (const auto& row : kept) cluster_ids.push_back(row.unit);

    FitResult fit = fit_ols(design, y, cluster_ids);
    // The within transformation absorbs unit and time means; widen the
    // small-sample correction to count the absorbed effects.
    int k_eff = k + out.n_units + out.n_times - 1;
    if (n > k_eff) {
        double old_c = (n - 1.0) / static_cast<double>(n - k);
        double new_c = (n - 1.0) / static_cast<double>(n - k_eff);
        double scale = new_c / old_c;
        for (int j = 0; j < k; ++j) fit.se[j] *= std::sqrt(scale);
        for (int j = 0; j < k; ++j) {
            fit.tstat[j] = fit.se[j] > 0.0 ? fit.coef(j) / fit.se[j] : 0.0;
            fit.pvalue[j] = fit.se[j] > 0.0 ? t_two_sided_p(fit.tstat[j], fit.df_resid) : 1.0;
        }
    }
    out.coef.assign(fit.coef.data(), fit.coef.data() + k);
    out.se = fit.se;
    out.tstat = fit.tstat;
    out.pvalue = fit.pvalue;
    out.df_resid = fit.df_resid;
    return out;
}

// ---------------------------------------------------------------------------
// Kaplan-Meier

struct KMPoint {
    double time = 0.0;
    int at_risk = 0;
    int events = 0;
    double survival = 1.0;
};

// `observations` holds (time, had_event); had_event=false marks censoring.
inline std::vector<KMPoint> km_curve(const std::vector<std::pair<double, bool>>& observations) {
    if (observations.empty()) throw InsufficientDataError("km_curve: no observations");
    std::map<double, std::pair<int, int>> by_time;  // time -> (events, total leaving)
    for (const auto& [time, event] : observations) {
        auto& cell = by_time[time];
        if (event) ++cell.first;
        ++cell.second;
    }
    std::vector<KMPoint> curve;
    int at_risk = static_cast<int>(observations.size());
    double survival = 1.0;
    for (const auto& [time, cell] : by_time) {
        const auto& [events, leaving] = cell;
        if (events > 0) {
            survival *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
            KMPoint point;
            point.time = time;
            point.at_risk = at_risk;
            point.events = events;
            point.survival = survival;
            curve.push_back(point);
        }
        at_risk -= leaving;
    }
    return curve;
}

}  // namespace nudgekit
