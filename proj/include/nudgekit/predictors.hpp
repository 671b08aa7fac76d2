#pragma once
// Saving-rate predictor analysis: boosted-tree importance profiles with
// category rollups, early/late phase comparison, and a small cross-validated
// model-selection harness.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nudgekit/common.hpp"
#include "nudgekit/tree_learners.hpp"

namespace nudgekit {

inline const std::array<std::string, 4>& predictor_categories() {
    static const std::array<std::string, 4> kCategories = {
        "baseline_consumption",
        "psychological",
        "socio_structural",
        "intervention_related",
    };
    return kCategories;
}

struct PredictorSpec {
    std::string name;
    std::string category;
};

struct ImportanceProfile {
    std::vector<std::string> feature_names;
    std::vector<double> feature_importance;            // sums to 1 unless degenerate
    std::map<std::string, double> category_importance;  // rollup over member features
    bool degenerate = false;                            // constant outcome, all zeros
    int n = 0;
};

inline void validate_specs(const std::vector<PredictorSpec>& specs) {
    const auto& cats = predictor_categories();
    for (const auto& spec : specs) {
        if (spec.name.empty()) throw ValidationError("predictor spec with empty name");
        if (std::find(cats.begin(), cats.end(), spec.category) == cats.end())
            throw ValidationError("unknown predictor category: " + spec.category);
    }
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (std::size_t j = i + 1; j < specs.size(); ++j)
            if (specs[i].name == specs[j].name)
                throw ValidationError("duplicate predictor name: " + specs[i].name);
}

inline ImportanceProfile fit_importance(const FeatureMatrix& X, const std::vector<double>& y,
                                        const std::vector<PredictorSpec>& specs,
                                        const BoostConfig& config, std::uint64_t seed) {
    validate_specs(specs);
    if (X.size() != y.size()) throw ValidationError("fit_importance: X/y size mismatch");
    if (X.empty()) throw ValidationError("fit_importance: empty sample");
    if (X.front().size() != specs.size())
        throw ValidationError("fit_importance: feature count does not match specs");

    ImportanceProfile profile;
    profile.n = static_cast<int>(y.size());
    for (const auto& spec : specs) profile.feature_names.push_back(spec.name);
    profile.feature_importance.assign(specs.size(), 0.0);
    for (const auto& cat : predictor_categories()) profile.category_importance[cat] = 0.0;

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    if (ss < 1e-12) {
        profile.degenerate = true;
        return profile;
    }

    Boost model = fit_boost(X, y, config, seed);
    profile.feature_importance = gain_importance(model);
    for (std::size_t f = 0; f < specs.size(); ++f)
        profile.category_importance[specs[f].category] += profile.feature_importance[f];
    return profile;
}

struct PhaseComparison {
    ImportanceProfile early;
    ImportanceProfile late;
};

// Same features and hyperparameters against early-phase and late-phase
// outcomes, so shifts in the profile reflect the outcome change alone.
inline PhaseComparison phase_comparison(const FeatureMatrix& X,
                                        const std::vector<double>& y_early,
                                        const std::vector<double>& y_late,
                                        const std::vector<PredictorSpec>& specs,
                                        const BoostConfig& config, std::uint64_t seed) {
    PhaseComparison out;
    out.early = fit_importance(X, y_early, specs, config, derive_seed(seed, "phase_early"));
    out.late = fit_importance(X, y_late, specs, config, derive_seed(seed, "phase_late"));
    return out;
}

// ---------------------------------------------------------------------------
// Model-selection harness (cross-validated RMSE)

struct ModelCandidate {
    std::string name;
    double cv_rmse = 0.0;
};

struct ModelSelection {
    std::vector<ModelCandidate> candidates;
    std::string winner;
    std::string note;
};

namespace detail {

inline std::vector<int> cv_fold_of(std::size_t n, int folds, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, "cv_folds"));
    rng.shuffle(order);
    std::vector<int> fold(n, 0);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % folds);
    return fold;
}

inline std::vector<double> ols_predict(const FeatureMatrix& x_train,
                                       const std::vector<double>& y_train,
                                       const FeatureMatrix& x_test) {
    std::size_t p = x_train.front().size();
    Eigen::MatrixXd design(x_train.size(), p + 1);
    Eigen::VectorXd target(x_train.size());
    for (std::size_t i = 0; i < x_train.size(); ++i) {
        design(i, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) design(i, j + 1) = x_train[i][j];
        target(static_cast<Eigen::Index>(i)) = y_train[i];
    }
    Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
    std::vector<double> preds;
    preds.reserve(x_test.size());
    for (const auto& row : x_test) {
        double v = beta(0);
        for (std::size_t j = 0; j < p; ++j) v += beta(j + 1) * row[j];
        preds.push_back(v);
    }
    return preds;
}

}  // namespace detail

// Compares OLS, a single tree, a random forest, and gradient boosting on
// pooled out-of-fold RMSE. A neural-network candidate is deliberately left
// out; the note records that boosted trees stand in as the nonlinear
// benchmark.
inline ModelSelection select_model(const FeatureMatrix& X, const std::vector<double>& y,
                                   int folds, std::uint64_t seed) {
    if (X.size() != y.size()) throw ValidationError("select_model: X/y size mismatch");
    if (static_cast<int>(X.size()) < folds)
        throw ValidationError("select_model: fewer rows than folds");

    std::size_t n = X.size();
    std::vector<int> fold = detail::cv_fold_of(n, folds, seed);

    std::vector<std::string> names = {"ols", "tree", "forest", "boost"};
    std::map<std::string, std::vector<double>> oof;
    for (const auto& name : names) oof[name].assign(n, 0.0);

    for (int f = 0; f < folds; ++f) {
        FeatureMatrix x_train, x_test;
        std::vector<double> y_train;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold[i] == f) {
                x_test.push_back(X[i]);
                test_idx.push_back(i);
            } else {
                x_train.push_back(X[i]);
                y_train.push_back(y[i]);
            }
        }
        if (x_train.empty() || x_test.empty()) continue;

        auto ols_preds = detail::ols_predict(x_train, y_train, x_test);

        TreeConfig tree_config;
        RegressionTree tree = fit_tree(x_train, y_train, tree_config);

        ForestConfig forest_config;
        forest_config.n_trees = 100;
        Forest forest = fit_forest(x_train, y_train, forest_config,
                                   derive_seed(seed, "cv_forest", static_cast<std::uint64_t>(f)));

        BoostConfig boost_config;
        boost_config.n_trees = 150;
        Boost boost = fit_boost(x_train, y_train, boost_config,
                                derive_seed(seed, "cv_boost", static_cast<std::uint64_t>(f)));

        for (std::size_t t = 0; t < test_idx.size(); ++t) {
            std::size_t i = test_idx[t];
            oof["ols"][i] = ols_preds[t];
            oof["tree"][i] = tree.predict(x_test[t]);
            oof["forest"][i] = forest.predict(x_test[t]);
            oof["boost"][i] = boost.predict(x_test[t]);
        }
    }

    ModelSelection selection;
    selection.note =
        "mlp candidate omitted (no neural-network dependency); "
        "gradient boosting serves as the nonlinear benchmark";
    double best = 0.0;
    for (const auto& name : names) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double e = oof[name][i] - y[i];
            sse += e * e;
        }
        ModelCandidate cand{name, std::sqrt(sse / static_cast<double>(n))};
        if (selection.winner.empty() || cand.cv_rmse < best) {
            best = cand.cv_rmse;
            selection.winner = name;
        }
        selection.candidates.push_back(cand);
    }
    return selection;
}

}  // namespace nudgekit
