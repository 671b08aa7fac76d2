#pragma once
// Individual treatment effect estimation for one treated-vs-control subset:
// S-, T-, X-, and DR-learners over random forests, 5-fold cross-fitting with
// outcome-independent fold assignment, and an equal-weight ensemble.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "nudgekit/common.hpp"
#include "nudgekit/rng.hpp"
#include "nudgekit/tree_learners.hpp"

namespace nudgekit {

struct HteConfig {
    int folds = 5;
    double propensity_clamp_lo = 0.05;
    double propensity_clamp_hi = 0.95;
    ForestConfig forest{150, 10, 5, 10, 0};
};

struct IteResult {
    std::vector<double> tau_s;
    std::vector<double> tau_t;
    std::vector<double> tau_x;
    std::vector<double> tau_dr;
    std::vector<double> tau_ensemble;
    std::vector<int> fold;
    double propensity = 0.0;
    bool propensity_clamped = false;
    std::vector<std::string> warnings;
};

// Folds depend only on (seed, ids, treatment): ids are shuffled within each
// arm stratum and dealt round-robin, so outcomes never influence assignment.
inline std::vector<int> assign_folds(const std::vector<std::string>& ids,
                                     const std::vector<int>& treated, int folds,
                                     std::uint64_t seed) {
    if (folds < 2) throw ValidationError("assign_folds: need at least 2 folds");
    if (ids.size() != treated.size()) throw ValidationError("assign_folds: length mismatch");
    std::vector<int> fold(ids.size(), -1);
    for (int stratum = 0; stratum <= 1; ++stratum) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (treated[i] == stratum) members.push_back(i);
        std::sort(members.begin(), members.end(),
                  [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
        Rng rng(derive_seed(seed, "folds", static_cast<std::uint64_t>(stratum)));
        rng.shuffle(members);
        for (std::size_t pos = 0; pos < members.size(); ++pos)
            fold[members[pos]] = static_cast<int>(pos % folds);
    }
    return fold;
}

inline std::vector<double> dr_pseudo_outcomes(const std::vector<double>& y,
                                              const std::vector<int>& treated,
                                              const std::vector<double>& mu0,
                                              const std::vector<double>& mu1, double e) {
    if (y.size() != treated.size() || y.size() != mu0.size() || y.size() != mu1.size())
        throw ValidationError("dr_pseudo_outcomes: length mismatch");
    if (!(e > 0.0 && e < 1.0)) throw ValidationError("dr_pseudo_outcomes: e outside (0, 1)");
    std::vector<double> psi(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        double base = mu1[i] - mu0[i];
        if (treated[i])
            psi[i] = base + (y[i] - mu1[i]) / e;
        else
            psi[i] = base - (y[i] - mu0[i]) / (1.0 - e);
    }
    return psi;
}

inline IteResult estimate_ites(const FeatureMatrix& X, const std::vector<double>& y,
                               const std::vector<int>& treated,
                               const std::vector<std::string>& ids, const HteConfig& config,
                               std::uint64_t seed) {
    detail::check_matrix(X, y);
    const std::size_t n = y.size();
    if (treated.size() != n || ids.size() != n)
        throw ValidationError("estimate_ites: length mismatch");
    int n_treated = 0;
    for (int a : treated) {
        if (a != 0 && a != 1) throw ValidationError("estimate_ites: treated must be 0/1");
        n_treated += a;
    }
    if (n_treated == 0 || n_treated == static_cast<int>(n))
        throw InsufficientDataError("estimate_ites: need both arms present");

    IteResult out;
    out.propensity = static_cast<double>(n_treated) / static_cast<double>(n);
    double e = out.propensity;
    if (e < config.propensity_clamp_lo || e > config.propensity_clamp_hi) {
        e = std::clamp(e, config.propensity_clamp_lo, config.propensity_clamp_hi);
        out.propensity_clamped = true;
        out.warnings.push_back("propensity " + format_double(out.propensity) +
                               " clamped to " + format_double(e));
    }
    out.propensity = e;
    out.fold = assign_folds(ids, treated, config.folds, seed);

    out.tau_s.assign(n, 0.0);
    out.tau_t.assign(n, 0.0);
    out.tau_x.assign(n, 0.0);
    out.tau_dr.assign(n, 0.0);
    out.tau_ensemble.assign(n, 0.0);

    for (int f = 0; f < config.folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (out.fold[i] == f ? test : train).push_back(i);
        if (test.empty()) continue;
        int train_treated = 0;
        for (std::size_t i : train) train_treated += treated[i];
        if (train.size() < 4 || train_treated == 0 ||
            train_treated == static_cast<int>(train.size()))
            throw InsufficientDataError("estimate_ites: fold " + std::to_string(f) +
                                        " lacks both arms in training data");

        auto subset_rows = [&](const std::vector<std::size_t>& which, bool want_treated,
                               bool filter, FeatureMatrix& xs, std::vector<double>& ys) {
            for (std::size_t i : which) {
                if (filter && (treated[i] == 1) != want_treated) continue;
                xs.push_back(X[i]);
                ys.push_back(y[i]);
            }
        };

        // S-learner: one forest with the arm indicator appended.
        {
            FeatureMatrix xs;
            std::vector<double> ys;
            for (std::size_t i : train) {
                auto row = X[i];
                row.push_back(static_cast<double>(treated[i]));
                xs.push_back(std::move(row));
                ys.push_back(y[i]);
            }
            Forest m = fit_forest(xs, ys, config.forest,
                                  derive_seed(seed, "s_learner", static_cast<std::uint64_t>(f)));
            for (std::size_t i : test) {
                auto row1 = X[i];
                row1.push_back(1.0);
                auto row0 = X[i];
                row0.push_back(0.0);
                out.tau_s[i] = m.predict(row1) - m.predict(row0);
            }
        }

        // Arm-specific outcome models, shared by T, X, and DR.
        FeatureMatrix x1, x0;
        std::vector<double> y1, y0;
        subset_rows(train, true, true, x1, y1);
        subset_rows(train, false, true, x0, y0);
        Forest mu1 = fit_forest(x1, y1, config.forest,
                                derive_seed(seed, "t_mu1", static_cast<std::uint64_t>(f)));
        Forest mu0 = fit_forest(x0, y0, config.forest,
                                derive_seed(seed, "t_mu0", static_cast<std::uint64_t>(f)));
        for (std::size_t i : test) out.tau_t[i] = mu1.predict(X[i]) - mu0.predict(X[i]);

        // X-learner: imputed effects regressed within each arm, then blended
        // with the propensity as the weight on the control-side model.
        {
            FeatureMatrix xd1, xd0;
            std::vector<double> d1, d0;
            for (std::size_t i : train) {
                if (treated[i]) {
                    xd1.push_back(X[i]);
                    d1.push_back(y[i] - mu0.predict(X[i]));
                } else {
                    xd0.push_back(X[i]);
                    d0.push_back(mu1.predict(X[i]) - y[i]);
                }
            }
            Forest tau1 = fit_forest(xd1, d1, config.forest,
                                     derive_seed(seed, "x_tau1", static_cast<std::uint64_t>(f)));
            Forest tau0 = fit_forest(xd0, d0, config.forest,
                                     derive_seed(seed, "x_tau0", static_cast<std::uint64_t>(f)));
            for (std::size_t i : test)
                out.tau_x[i] = e * tau0.predict(X[i]) + (1.0 - e) * tau1.predict(X[i]);
        }

        // DR-learner: doubly robust pseudo-outcomes regressed on covariates.
        {
            std::vector<double> yt, m0, m1;
            std::vector<int> at;
            FeatureMatrix xt;
            for (std::size_t i : train) {
                xt.push_back(X[i]);
                yt.push_back(y[i]);
                at.push_back(treated[i]);
                m0.push_back(mu0.predict(X[i]));
                m1.push_back(mu1.predict(X[i]));
            }
            auto psi = dr_pseudo_outcomes(yt, at, m0, m1, e);
            Forest dr = fit_forest(xt, psi, config.forest,
                                   derive_seed(seed, "dr", static_cast<std::uint64_t>(f)));
            for (std::size_t i : test) out.tau_dr[i] = dr.predict(X[i]);
        }
    }

    for (std::size_t i = 0; i < n; ++i)
        out.tau_ensemble[i] =
            (out.tau_s[i] + out.tau_t[i] + out.tau_x[i] + out.tau_dr[i]) / 4.0;
    return out;
}

// ---------------------------------------------------------------------------
// Responder profiling

struct QuartileRow {
    std::string name;
    double top_mean = 0.0;
    double rest_mean = 0.0;
};

// Most responsive = most negative tau (largest estimated saving). Returns
// covariate means for that quartile against everyone else.
inline std::vector<QuartileRow> top_quartile_profile(const std::vector<double>& tau,
                                                     const FeatureMatrix& X,
                                                     const std::vector<std::string>& names) {
    const std::size_t n = tau.size();
    if (n == 0 || X.size() != n) throw ValidationError("top_quartile_profile: length mismatch");
    for (const auto& row : X)
        if (row.size() != names.size())
            throw ValidationError("top_quartile_profile: name/feature mismatch");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (tau[a] != tau[b]) return tau[a] < tau[b];
        return a < b;
    });
    std::size_t k = std::max<std::size_t>(1, n / 4);
    std::vector<bool> in_top(n, false);
    for (std::size_t i = 0; i < k; ++i) in_top[order[i]] = true;

    std::vector<QuartileRow> rows;
    for (std::size_t j = 0; j < names.size(); ++j) {
        QuartileRow row;
        row.name = names[j];
        double top_sum = 0.0, rest_sum = 0.0;
        std::size_t rest = n - k;
        for (std::size_t i = 0; i < n; ++i)
            (in_top[i] ? top_sum : rest_sum) += X[i][j];
        row.top_mean = top_sum / static_cast<double>(k);
        row.rest_mean = rest > 0 ? rest_sum / static_cast<double>(rest) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace nudgekit
