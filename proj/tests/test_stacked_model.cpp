#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "dabopt/datasets.hpp"
#include "dabopt/errors.hpp"
#include "dabopt/oracle.hpp"
#include "dabopt/rng.hpp"
#include "dabopt/stacked_model.hpp"

using namespace dabopt;
namespace fs = std::filesystem;

namespace {

// Hand-built dataset over a deterministic scatter of in-range points.
Dataset scatter(int n, double eta, Fidelity fid, std::uint64_t seed) {
    Dataset d;
    d.fidelity = fid;
    d.provenance = {fid == Fidelity::Simulation ? "sim_grid" : "exp_pool", seed, ""};
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
        OperatingPoint pt{uniform01(rng), uniform01(rng), uniform_in(rng, 200.0, 2000.0)};
        d.samples.push_back({pt, eta, fid});
    }
    return d;
}

GbrtHyperparams exact_hp() { return {1, 3, 0.0, 1.0, 2}; }

}  // namespace

TEST_CASE("constant surfaces stack exactly") {
    Dataset sim = scatter(30, 97.0, Fidelity::Simulation, 1);
    Dataset exp = scatter(30, 96.0, Fidelity::Experimental, 2);

    SECTION("a single full-rate unregularized tree closes the gap bitwise") {
        StackedModel m = fit_stacked(sim, exp, exact_hp(), exact_hp());
        OperatingPoint pt{0.3, 0.6, 700.0};
        CHECK(m.sim_model.predict(pt.features()) == 97.0);
        CHECK(m.gap_model.predict(pt.features()) == -1.0);
        CHECK(m.predict(pt) == 96.0);
    }

    SECTION("the default gap settings converge to the same answer") {
        StackedModel m =
            fit_stacked(sim, exp, GbrtHyperparams::landscape_defaults(),
                        GbrtHyperparams::gap_defaults());
        OperatingPoint pt{0.3, 0.6, 700.0};
        CHECK_THAT(m.gap_model.predict(pt.features()),
                   Catch::Matchers::WithinAbs(-1.0, 1e-3));
        CHECK_THAT(m.predict(pt), Catch::Matchers::WithinAbs(96.0, 1e-3));
    }
}

TEST_CASE("a gap of zero leaves stage I untouched") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{8, 8, 6}, o);
    GbrtModel stage1 = fit_landscape(sim, GbrtHyperparams{30, 6, 0.1, 0.3, 2});

    // bench labels manufactured to sit exactly on the stage-I surface
    Dataset exp = scatter(40, 50.0, Fidelity::Experimental, 5);
    for (Sample& s : exp.samples) s.eta = stage1.predict(s.point.features());

    GbrtModel gap = fit_gap(stage1, exp, GbrtHyperparams::gap_defaults());
    REQUIRE(gap.trees.size() == 1);
    CHECK(gap.trees[0].is_zero_leaf());
    for (const Sample& s : exp.samples)
        CHECK(stage1.predict(s.point.features()) + gap.predict(s.point.features()) ==
              stage1.predict(s.point.features()));
}

TEST_CASE("the stacked prediction is the sum of its stages") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{6, 6, 5}, o);
    Dataset exp = generate_exp_pool(60, o, 8);
    StackedModel m = fit_stacked(sim, exp, GbrtHyperparams{20, 5, 0.1, 0.2, 2},
                                 GbrtHyperparams{20, 4, 0.1, 0.2, 2});

    std::mt19937_64 rng(13);
    for (int i = 0; i < 25; ++i) {
        OperatingPoint pt{uniform01(rng), uniform01(rng), uniform_in(rng, 200.0, 2000.0)};
        auto f = pt.features();
        CHECK(m.predict(pt) == m.sim_model.predict(f) + m.gap_model.predict(f));
    }
    CHECK_THROWS_AS(m.predict(OperatingPoint{1.2, 0.5, 600.0}), RangeError);
    CHECK_THROWS_AS(m.predict(OperatingPoint{0.5, 0.5, 100.0}), RangeError);
}

TEST_CASE("an unconstrained gap stage memorizes its training pool") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{8, 8, 6}, o);
    Dataset exp = generate_exp_pool(50, o, 14);
    StackedModel m = fit_stacked(sim, exp, GbrtHyperparams{30, 6, 0.1, 0.3, 2},
                                 GbrtHyperparams{50, 8, 0.0, 1.0, 2});

    double sse = 0.0;
    for (const Sample& s : exp.samples) {
        double e = m.predict(s.point) - s.eta;
        sse += e * e;
    }
    CHECK(sse / static_cast<double>(exp.samples.size()) < 1e-18);
}

TEST_CASE("evaluate reports the documented metrics") {
    Dataset truth = scatter(20, 97.0, Fidelity::Experimental, 21);

    SECTION("a perfect predictor") {
        AccuracyReport r = evaluate([](const OperatingPoint&) { return 97.0; }, truth.samples);
        CHECK(r.mean_abs_error_pp == 0.0);
        CHECK(r.worst_abs_error_pp == 0.0);
        CHECK(r.accuracy_percent == 100.0);
        CHECK(r.n == 20);
    }

    SECTION("a uniformly biased predictor") {
        AccuracyReport r = evaluate([](const OperatingPoint&) { return 98.0; }, truth.samples);
        CHECK_THAT(r.mean_abs_error_pp, Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(r.worst_abs_error_pp, Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(r.accuracy_percent,
                   Catch::Matchers::WithinAbs(100.0 - 100.0 / 97.0, 1e-12));
    }

    SECTION("empty evaluation sets are rejected") {
        CHECK_THROWS_AS(evaluate([](const OperatingPoint&) { return 0.0; },
                                 std::vector<Sample>{}),
                        DataError);
    }
}

TEST_CASE("fidelity tags are enforced on every pool") {
    Dataset sim = scatter(10, 97.0, Fidelity::Simulation, 31);
    Dataset exp = scatter(10, 96.0, Fidelity::Experimental, 32);

    CHECK_THROWS_AS(fit_landscape(exp, exact_hp()), DataError);
    CHECK_THROWS_AS(fit_landscape(Dataset{}, exact_hp()), DataError);

    GbrtModel stage1 = fit_landscape(sim, exact_hp());
    CHECK_THROWS_AS(fit_gap(stage1, sim, exact_hp()), DataError);

    Dataset mixed = exp;
    mixed.samples[3].fidelity = Fidelity::Simulation;
    CHECK_THROWS_AS(fit_gap(stage1, mixed, exact_hp()), DataError);
}

TEST_CASE("baseline comparison refuses leaking evaluation points") {
    OracleParams o;
    Dataset exp = generate_exp_pool(100, o, 41);
    SplitResult s = split_dataset(exp, SplitSpec{0.4, 0.2, 0.4, 42});
    Dataset sim = generate_sim_grid(GridCounts{6, 6, 5}, o);

    // evaluating on the training pool itself must be rejected
    CHECK_THROWS_MATCHES(
        compare_baselines(sim, s.train, exact_hp(), exact_hp(), s.train), DataError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("overlaps")));

    BaselineComparison cmp =
        compare_baselines(sim, s.train, GbrtHyperparams{40, 6, 0.1, 0.2, 2},
                          GbrtHyperparams{40, 6, 0.1, 0.2, 2}, s.validation);
    CHECK(cmp.sim_only.n == 40);
    CHECK(cmp.stacked.n == 40);

    AccuracyReport again =
        evaluate([&](const OperatingPoint& pt) { return cmp.model.predict(pt); },
                 s.validation.samples);
    CHECK(again.mean_abs_error_pp == cmp.stacked.mean_abs_error_pp);
    CHECK(again.accuracy_percent == cmp.stacked.accuracy_percent);
}

TEST_CASE("retraining on identical pools reproduces the model bit for bit") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{6, 6, 5}, o);
    Dataset exp = generate_exp_pool(60, o, 51);
    GbrtHyperparams hp1{25, 5, 0.1, 0.2, 2};
    GbrtHyperparams hp2{25, 5, 0.1, 0.2, 2};

    StackedModel a = fit_stacked(sim, exp, hp1, hp2);
    StackedModel b = fit_stacked(sim, exp, hp1, hp2);
    CHECK(stacked_to_json(a) == stacked_to_json(b));

    // row order changes the dataset digest but not the fitted stages
    Dataset shuffled = exp;
    std::mt19937_64 rng(52);
    shuffle_seeded(shuffled.samples, rng);
    StackedModel c = fit_stacked(sim, shuffled, hp1, hp2);
    CHECK(gbrt_to_json(c.sim_model) == gbrt_to_json(a.sim_model));
    CHECK(gbrt_to_json(c.gap_model) == gbrt_to_json(a.gap_model));
    CHECK(c.exp_train_digest != a.exp_train_digest);
}

TEST_CASE("the data-size sweep agrees with the full-pool baseline") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{8, 8, 6}, o);
    Dataset exp = generate_exp_pool(120, o, 61);
    SplitResult s = split_dataset(exp, SplitSpec{0.5, 0.2, 0.3, 62});
    GbrtHyperparams hp{30, 5, 0.1, 0.2, 2};

    BaselineComparison cmp = compare_baselines(sim, s.train, hp, hp, s.validation);
    std::vector<double> one{1.0};
    auto table = data_size_sweep(cmp.model.sim_model, s.train, s.validation, hp, one, 1, 7);
    REQUIRE(table.size() == 1);
    CHECK(table[0].fraction == 1.0);
    CHECK(table[0].mean_accuracy == cmp.stacked.accuracy_percent);
    CHECK(table[0].mean_abs_error_pp == cmp.stacked.mean_abs_error_pp);
    CHECK(table[0].min_accuracy == table[0].max_accuracy);
}

TEST_CASE("the data-size sweep validates its inputs") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{5, 5, 4}, o);
    Dataset exp = generate_exp_pool(100, o, 71);
    SplitResult s = split_dataset(exp, SplitSpec{0.5, 0.2, 0.3, 72});
    GbrtModel stage1 = fit_landscape(sim, GbrtHyperparams{10, 4, 0.1, 0.3, 2});
    GbrtHyperparams hp{10, 4, 0.1, 0.3, 2};

    std::vector<double> bad0{0.0, 0.5};
    CHECK_THROWS_AS(data_size_sweep(stage1, s.train, s.validation, hp, bad0, 1, 1), ConfigError);
    std::vector<double> desc{0.5, 0.25};
    CHECK_THROWS_AS(data_size_sweep(stage1, s.train, s.validation, hp, desc, 1, 1), ConfigError);
    std::vector<double> ok{0.5};
    CHECK_THROWS_AS(data_size_sweep(stage1, s.train, s.validation, hp, ok, 0, 1), ConfigError);
    CHECK_THROWS_AS(data_size_sweep(stage1, s.train, s.validation, hp,
                                    std::vector<double>{}, 1, 1),
                    ConfigError);
    std::vector<double> tiny{0.004};
    CHECK_THROWS_AS(data_size_sweep(stage1, s.train, s.validation, hp, tiny, 1, 1), DataError);

    auto table = data_size_sweep(stage1, s.train, s.validation, hp,
                                 std::vector<double>{0.5, 1.0}, 3, 9);
    REQUIRE(table.size() == 2);
    for (const auto& row : table) {
        CHECK(row.min_accuracy <= row.mean_accuracy);
        CHECK(row.mean_accuracy <= row.max_accuracy);
    }
}

TEST_CASE("grid search scans in order and keeps the earliest tie") {
    // a one-split staircase: height 1 already fits it exactly, height 2 ties
    FeatureMatrix x;
    std::vector<double> y;
    for (int i = 0; i < 16; ++i) {
        x.push_back({static_cast<double>(i)});
        y.push_back(i < 8 ? 1.0 : 2.0);
    }

    HyperparamGrid grid;
    grid.heights = {1, 2};
    grid.rates = {1.0};
    grid.lambdas = {0.0};
    grid.max_trees = 5;
    grid.patience = 5;

    GridSearchResult res = search_hyperparams(x, y, x, y, grid, BaseMode::MeanOfTargets);
    REQUIRE(res.table.size() == 2);
    CHECK(res.best.max_height == 1);
    CHECK(res.best_test_mse == 0.0);
    CHECK(res.best.num_trees >= 1);

    HyperparamGrid empty;
    empty.heights = {};
    CHECK_THROWS_AS(search_hyperparams(x, y, x, y, empty, BaseMode::MeanOfTargets), ConfigError);
}

TEST_CASE("stacked models survive a save/load cycle unchanged") {
    OracleParams o;
    Dataset sim = generate_sim_grid(GridCounts{6, 6, 5}, o);
    Dataset exp = generate_exp_pool(50, o, 81);
    StackedModel m = fit_stacked(sim, exp, GbrtHyperparams{15, 5, 0.1, 0.2, 2},
                                 GbrtHyperparams{15, 4, 0.1, 0.2, 2});

    fs::path dir = fs::temp_directory_path() /
                   ("dabopt_test_stacked_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::string path = (dir / "model.json").string();

    save_stacked(m, path);
    StackedModel back = load_stacked(path);
    CHECK(stacked_to_json(back) == stacked_to_json(m));
    CHECK(back.sim_train_digest == m.sim_train_digest);

    std::mt19937_64 rng(82);
    for (int i = 0; i < 10; ++i) {
        OperatingPoint pt{uniform01(rng), uniform01(rng), uniform_in(rng, 200.0, 2000.0)};
        CHECK(back.predict(pt) == m.predict(pt));
    }
    fs::remove_all(dir);
}

TEST_CASE("malformed stacked documents are rejected") {
    CHECK_THROWS_AS(stacked_from_json("nonsense"), DataError);
    CHECK_THROWS_AS(stacked_from_json("{\"format\":\"something-else\"}"), DataError);
    CHECK_THROWS_AS(stacked_from_json("{\"format\":\"stacked-efficiency-model-v1\"}"), DataError);

    // stages with the wrong feature arity must not load
    GbrtModel narrow;
    narrow.feature_arity = 2;
    narrow.base_prediction = 1.0;
    StackedModel m;
    m.sim_model = narrow;
    m.gap_model = narrow;
    CHECK_THROWS_MATCHES(
        stacked_from_json(stacked_to_json(m)), DataError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("arity")));
}
