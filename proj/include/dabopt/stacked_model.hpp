#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dabopt/datasets.hpp"
#include "dabopt/errors.hpp"
#include "dabopt/gbrt.hpp"
#include "dabopt/rng.hpp"
#include "dabopt/types.hpp"

namespace dabopt {

// Two-stage surrogate: stage I learns the simulated efficiency landscape
// from the cheap dense pool, stage II learns the experiment-minus-stage-I
// gap from the scarce bench pool. Inference is the exact sum of both.

struct StackedModel {
    GbrtModel sim_model;
    GbrtModel gap_model;
    std::string sim_train_digest;
    std::string exp_train_digest;

    double predict(const OperatingPoint& pt) const {
        check_in_range(pt);
        auto f = pt.features();
        return sim_model.predict(f) + gap_model.predict(f);
    }
};

namespace detail {

inline void require_fidelity(const Dataset& data, Fidelity want, const char* which) {
    if (data.samples.empty())
        throw DataError(std::string(which) + " pool is empty");
    if (data.fidelity != want)
        throw DataError(std::string(which) + " pool has the wrong fidelity tag");
    for (const Sample& s : data.samples)
        if (s.fidelity != want)
            throw DataError(std::string(which) + " pool mixes fidelity tags");
}

}  // namespace detail

inline GbrtModel fit_landscape(const Dataset& sim_train, const GbrtHyperparams& hp) {
    detail::require_fidelity(sim_train, Fidelity::Simulation, "simulation");
    auto targets = sim_train.targets();
    return fit_gbrt(sim_train.features(), targets, hp, BaseMode::MeanOfTargets);
}

// Stage II targets are the bench labels minus the stage-I prediction; the
// gap model's natural prior is no gap, so its base is zero.
inline GbrtModel fit_gap(const GbrtModel& sim_model, const Dataset& exp_train,
                         const GbrtHyperparams& hp) {
    detail::require_fidelity(exp_train, Fidelity::Experimental, "experimental");
    FeatureMatrix x = exp_train.features();
    std::vector<double> residuals(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        residuals[i] = exp_train.samples[i].eta - sim_model.predict(x[i]);
    return fit_gbrt(x, residuals, hp, BaseMode::Zero);
}

inline StackedModel fit_stacked(const Dataset& sim_train, const Dataset& exp_train,
                                const GbrtHyperparams& hp_landscape,
                                const GbrtHyperparams& hp_gap) {
    StackedModel m;
    m.sim_model = fit_landscape(sim_train, hp_landscape);
    m.gap_model = fit_gap(m.sim_model, exp_train, hp_gap);
    m.sim_train_digest = dataset_digest(sim_train);
    m.exp_train_digest = dataset_digest(exp_train);
    return m;
}

// --- accuracy reporting ----------------------------------------------------

struct AccuracyReport {
    double mean_abs_error_pp = 0.0;   // mean |prediction - truth|, percentage points
    double accuracy_percent = 0.0;    // 100 - mean(|prediction - truth| / truth * 100)
    double worst_abs_error_pp = 0.0;
    int n = 0;
};

template <typename PredictFn>
AccuracyReport evaluate(PredictFn&& predict, const std::vector<Sample>& data) {
    if (data.empty()) throw DataError("cannot evaluate on an empty sample list");
    AccuracyReport r;
    r.n = static_cast<int>(data.size());
    double abs_sum = 0.0;
    double rel_sum = 0.0;
    for (const Sample& s : data) {
        double err = std::abs(predict(s.point) - s.eta);
        abs_sum += err;
        rel_sum += err / s.eta * 100.0;
        r.worst_abs_error_pp = std::max(r.worst_abs_error_pp, err);
    }
    r.mean_abs_error_pp = abs_sum / static_cast<double>(r.n);
    r.accuracy_percent = 100.0 - rel_sum / static_cast<double>(r.n);
    return r;
}

// --- three-way baseline comparison ------------------------------------------

struct BaselineComparison {
    AccuracyReport sim_only;
    AccuracyReport exp_only;
    AccuracyReport stacked;
    StackedModel model;
    GbrtModel exp_only_model;
};

namespace detail {

inline void require_disjoint(const Dataset& eval_set, const Dataset& pool, const char* which) {
    std::set<std::tuple<double, double, double>> train_points;
    for (const Sample& s : pool.samples)
        train_points.insert({s.point.d1, s.point.d2, s.point.p});
    for (const Sample& s : eval_set.samples)
        if (train_points.count({s.point.d1, s.point.d2, s.point.p}))
            throw DataError(std::string("evaluation set overlaps the ") + which + " training pool");
}

}  // namespace detail

// Fits the full stack, a landscape-only model, and a bench-only model (same
// structure as stage I, trained directly on the experimental pool), then
// scores all three on a held-out experimental set.
inline BaselineComparison compare_baselines(const Dataset& sim_train, const Dataset& exp_train,
                                            const GbrtHyperparams& hp_landscape,
                                            const GbrtHyperparams& hp_gap,
                                            const Dataset& eval_set) {
    detail::require_fidelity(eval_set, Fidelity::Experimental, "evaluation");
    detail::require_disjoint(eval_set, sim_train, "simulation");
    detail::require_disjoint(eval_set, exp_train, "experimental");

    BaselineComparison out;
    out.model = fit_stacked(sim_train, exp_train, hp_landscape, hp_gap);

    detail::require_fidelity(exp_train, Fidelity::Experimental, "experimental");
    auto exp_targets = exp_train.targets();
    out.exp_only_model =
        fit_gbrt(exp_train.features(), exp_targets, hp_landscape, BaseMode::MeanOfTargets);

    const GbrtModel& sim_model = out.model.sim_model;
    out.sim_only = evaluate(
        [&](const OperatingPoint& pt) { return sim_model.predict(pt.features()); },
        eval_set.samples);
    out.exp_only = evaluate(
        [&](const OperatingPoint& pt) { return out.exp_only_model.predict(pt.features()); },
        eval_set.samples);
    out.stacked = evaluate([&](const OperatingPoint& pt) { return out.model.predict(pt); },
                           eval_set.samples);
    return out;
}

// --- training-set size sweep -------------------------------------------------

struct DataSizePoint {
    double fraction = 0.0;
    double mean_accuracy = 0.0;
    double min_accuracy = 0.0;
    double max_accuracy = 0.0;
    double mean_abs_error_pp = 0.0;
};

// Holds stage I fixed, retrains stage II on random subsamples of the bench
// training pool, and reports accuracy statistics per fraction over
// `repeats` derived-seed draws.
inline std::vector<DataSizePoint> data_size_sweep(const GbrtModel& sim_model,
                                                  const Dataset& exp_train,
                                                  const Dataset& eval_set,
                                                  const GbrtHyperparams& hp_gap,
                                                  std::span<const double> fractions, int repeats,
                                                  std::uint64_t seed) {
    detail::require_fidelity(exp_train, Fidelity::Experimental, "experimental");
    detail::require_fidelity(eval_set, Fidelity::Experimental, "evaluation");
    if (fractions.empty()) throw ConfigError("no fractions given");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
            throw ConfigError("fractions must be in (0, 1]");
        if (i > 0 && fractions[i] <= fractions[i - 1])
            throw ConfigError("fractions must be strictly ascending");
    }
    if (repeats < 1) throw ConfigError("repeats must be >= 1");

    const std::size_t n = exp_train.samples.size();
    std::vector<DataSizePoint> table;
    table.reserve(fractions.size());
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        double frac = fractions[fi];
        auto k = static_cast<std::size_t>(
            std::llround(static_cast<double>(n) * frac));
        if (k < 1)
            throw DataError("fraction " + detail::format_double(frac) +
                            " yields an empty subsample");

        DataSizePoint row;
        row.fraction = frac;
        double acc_sum = 0.0, err_sum = 0.0;
        for (int r = 0; r < repeats; ++r) {
            std::uint64_t sub_seed =
                derive_seed(seed, fi * static_cast<std::uint64_t>(repeats) +
                                      static_cast<std::uint64_t>(r));
            Dataset sub;
            sub.fidelity = exp_train.fidelity;
            sub.provenance = exp_train.provenance;
            sub.samples = exp_train.samples;
            std::mt19937_64 rng(sub_seed);
            shuffle_seeded(sub.samples, rng);
            sub.samples.resize(k);

            GbrtModel gap = fit_gap(sim_model, sub, hp_gap);
            AccuracyReport rep = evaluate(
                [&](const OperatingPoint& pt) {
                    auto f = pt.features();
                    return sim_model.predict(f) + gap.predict(f);
                },
                eval_set.samples);
            acc_sum += rep.accuracy_percent;
            err_sum += rep.mean_abs_error_pp;
            if (r == 0) {
                row.min_accuracy = row.max_accuracy = rep.accuracy_percent;
            } else {
                row.min_accuracy = std::min(row.min_accuracy, rep.accuracy_percent);
                row.max_accuracy = std::max(row.max_accuracy, rep.accuracy_percent);
            }
        }
        row.mean_accuracy = acc_sum / repeats;
        row.mean_abs_error_pp = err_sum / repeats;
        table.push_back(row);
    }
    return table;
}

// --- hyperparameter grid search ----------------------------------------------

struct HyperparamGrid {
    std::vector<int> heights = {5, 6, 7, 8, 9, 10, 11, 12};
    std::vector<double> rates = {0.05, 0.1};
    std::vector<double> lambdas = {0.01, 0.1, 1.0};
    int max_trees = 200;
    int patience = 20;
};

struct GridSearchRow {
    GbrtHyperparams hp;
    double test_mse = 0.0;
};

struct GridSearchResult {
    GbrtHyperparams best;
    double best_test_mse = 0.0;
    std::vector<GridSearchRow> table;
};

// Scans height x rate x lambda (in that nesting order); the tree count per
// combination comes from early stopping against the test set. Ties keep the
// earliest combination scanned.
inline GridSearchResult search_hyperparams(const FeatureMatrix& train_x,
                                           std::span<const double> train_y,
                                           const FeatureMatrix& test_x,
                                           std::span<const double> test_y,
                                           const HyperparamGrid& grid, BaseMode base) {
    if (grid.heights.empty() || grid.rates.empty() || grid.lambdas.empty())
        throw ConfigError("empty hyperparameter grid");
    GridSearchResult out;
    bool first = true;
    for (int h : grid.heights) {
        for (double rate : grid.rates) {
            for (double lambda : grid.lambdas) {
                GbrtHyperparams hp{grid.max_trees, h, lambda, rate, 2};
                ValidatedFit fit = fit_gbrt_early_stop(train_x, train_y, test_x, test_y, hp,
                                                       base, grid.patience);
                GbrtHyperparams chosen = hp;
                chosen.num_trees = fit.best_num_trees;
                out.table.push_back({chosen, fit.best_val_mse});
                if (first || fit.best_val_mse < out.best_test_mse) {
                    out.best = chosen;
                    out.best_test_mse = fit.best_val_mse;
                    first = false;
                }
            }
        }
    }
    return out;
}

// --- serialization ------------------------------------------------------------

// Single JSON document with both stage models and enough metadata to refuse
// misuse: the valid input box, the metric definitions the reports use, and
// digests of the training sets.
inline std::string stacked_to_json(const StackedModel& m) {
    std::string out;
    out += "{\"format\":\"stacked-efficiency-model-v1\"";
    out += ",\"metadata\":{";
    out += "\"ranges\":{\"d1\":[" + detail::format_double(ranges::d1_min) + "," +
           detail::format_double(ranges::d1_max) + "],\"d2\":[" +
           detail::format_double(ranges::d2_min) + "," + detail::format_double(ranges::d2_max) +
           "],\"p_watts\":[" + detail::format_double(ranges::p_min) + "," +
           detail::format_double(ranges::p_max) + "]}";
    out += ",\"metrics\":{\"mean_abs_error_pp\":\"mean |prediction - truth| in efficiency "
           "percentage points\",\"accuracy_percent\":\"100 - mean(|prediction - truth| / truth * "
           "100)\"}";
    out += ",\"train_digests\":{\"sim\":\"" + m.sim_train_digest + "\",\"exp\":\"" +
           m.exp_train_digest + "\"}}";
    out += ",\"sim_model\":" + gbrt_to_json(m.sim_model);
    out += ",\"gap_model\":" + gbrt_to_json(m.gap_model);
    out += "}";
    return out;
}

inline StackedModel stacked_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    StackedModel m;
    try {
        if (j.at("format").get<std::string>() != "stacked-efficiency-model-v1")
            throw DataError("unsupported model format tag");
        m.sim_model = gbrt_from_json_value(j.at("sim_model"));
        m.gap_model = gbrt_from_json_value(j.at("gap_model"));
        const auto& digests = j.at("metadata").at("train_digests");
        m.sim_train_digest = digests.at("sim").get<std::string>();
        m.exp_train_digest = digests.at("exp").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
    if (m.sim_model.feature_arity != kFeatureArity || m.gap_model.feature_arity != kFeatureArity)
        throw DataError("stacked model stages must have feature arity 3");
    return m;
}

inline void save_stacked(const StackedModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << stacked_to_json(m) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

inline StackedModel load_stacked(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return stacked_from_json(buf.str());
}

}  // namespace dabopt
