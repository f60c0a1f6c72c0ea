#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dabopt/config.hpp"
#include "dabopt/datasets.hpp"
#include "dabopt/errors.hpp"
#include "dabopt/gbrt.hpp"
#include "dabopt/oracle.hpp"
#include "dabopt/pipeline.hpp"
#include "dabopt/pso_savl.hpp"
#include "dabopt/rng.hpp"
#include "dabopt/stacked_model.hpp"
#include "dabopt/types.hpp"

namespace fs = std::filesystem;
using namespace dabopt;

namespace {

struct GlobalOpts {
    std::uint64_t seed = kDefaultSeed;
    std::string config_path;
    std::string out_dir = "out";
};

// Everything a command can pull from the config file, loaded eagerly so the
// unknown-key check sees every section regardless of which command runs.
struct Context {
    GlobalOpts g;
    OracleParams oracle;
    PsoConfig pso;
    GbrtHyperparams hp_sim;
    GbrtHyperparams hp_gap;
    GridCounts grid;
    int exp_count = kDefaultExpCount;
    std::string config_digest;
};

struct RunArtifacts {
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

GbrtHyperparams hyperparams_from(const ConfigFile& cfg, const std::string& section,
                                 GbrtHyperparams base) {
    base.num_trees = cfg.get_int(section + ".num_trees", base.num_trees);
    base.max_height = cfg.get_int(section + ".max_height", base.max_height);
    base.l2_lambda = cfg.get_double(section + ".l2_lambda", base.l2_lambda);
    base.learning_rate = cfg.get_double(section + ".learning_rate", base.learning_rate);
    base.min_samples_split = cfg.get_int(section + ".min_samples_split", base.min_samples_split);
    base.validate();
    return base;
}

GridCounts parse_grid_spec(const std::string& spec) {
    GridCounts g;
    if (std::sscanf(spec.c_str(), "%dx%dx%d", &g.n_d1, &g.n_d2, &g.n_p) != 3)
        throw ConfigError("grid spec must look like 25x25x20, got '" + spec + "'");
    return g;
}

void load_context(Context& c) {
    ConfigFile cfg;
    if (!c.g.config_path.empty()) {
        cfg = ConfigFile::from_file(c.g.config_path);
        std::ifstream in(c.g.config_path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        c.config_digest = fnv1a_hex(buf.str());
    }
    c.oracle = OracleParams::from_config(cfg);
    bool pso_seed_fixed = cfg.has("pso.seed");
    c.pso = PsoConfig::from_config(cfg);
    if (!pso_seed_fixed) c.pso.seed = derive_seed(c.g.seed, streams::pso);
    c.hp_sim = hyperparams_from(cfg, "sim_model", GbrtHyperparams::landscape_defaults());
    c.hp_gap = hyperparams_from(cfg, "gap_model", GbrtHyperparams::gap_defaults());
    c.grid = parse_grid_spec(cfg.get_string("data.sim_grid", "25x25x20"));
    c.exp_count = cfg.get_int("data.exp_count", kDefaultExpCount);

    auto unused = cfg.unused_keys();
    if (!unused.empty()) {
        std::string msg = cfg.source() + ": unknown key(s):";
        for (const auto& k : unused) msg += " '" + k + "'";
        throw ConfigError(msg);
    }
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out;
}

// One JSONL record per run, appended so earlier history survives.
void append_manifest(const Context& ctx, const std::string& command, const std::string& status,
                     const RunArtifacts& artifacts, double duration_seconds) {
    std::error_code ec;
    fs::create_directories(ctx.g.out_dir, ec);
    std::ofstream out(fs::path(ctx.g.out_dir) / "manifest.jsonl", std::ios::app);
    if (!out) return;  // never let bookkeeping mask the real outcome
    out << "{\"command\":\"" << json_escape(command) << "\",\"status\":\"" << status
        << "\",\"seed\":" << ctx.g.seed << ",\"config\":\"" << json_escape(ctx.g.config_path)
        << "\",\"config_digest\":\"" << ctx.config_digest << "\",\"inputs\":[";
    for (std::size_t i = 0; i < artifacts.inputs.size(); ++i)
        out << (i ? "," : "") << '"' << json_escape(artifacts.inputs[i]) << '"';
    out << "],\"outputs\":[";
    for (std::size_t i = 0; i < artifacts.outputs.size(); ++i)
        out << (i ? "," : "") << '"' << json_escape(artifacts.outputs[i]) << '"';
    char dur[32];
    std::snprintf(dur, sizeof dur, "%.3f", duration_seconds);
    out << "],\"duration_seconds\":" << dur << "}\n";
}

std::string fd(double v) { return detail::shortest_double(v); }

void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << body;
    if (!out) throw DataError("write failed: " + path);
}

std::string report_csv_header() {
    return "model,mean_abs_error_pp,accuracy_percent,worst_abs_error_pp,n\n";
}

std::string report_csv_row(const std::string& name, const AccuracyReport& r) {
    return name + "," + fd(r.mean_abs_error_pp) + "," + fd(r.accuracy_percent) + "," +
           fd(r.worst_abs_error_pp) + "," + std::to_string(r.n) + "\n";
}

void print_report(const std::string& name, const AccuracyReport& r) {
    std::printf("%-10s mean |err| %.4f pp   accuracy %.4f %%   worst %.4f pp   (n=%d)\n",
                name.c_str(), r.mean_abs_error_pp, r.accuracy_percent, r.worst_abs_error_pp, r.n);
}

// --- generate ---------------------------------------------------------------

struct GenerateOpts {
    std::string sim_grid_flag;
    int exp_count_flag = -1;
};

RunArtifacts cmd_generate(Context& ctx, const GenerateOpts& opt) {
    GridCounts grid = ctx.grid;
    if (!opt.sim_grid_flag.empty()) grid = parse_grid_spec(opt.sim_grid_flag);
    int exp_count = opt.exp_count_flag > 0 ? opt.exp_count_flag : ctx.exp_count;

    Dataset sim = generate_sim_grid(grid, ctx.oracle);
    Dataset exp =
        generate_exp_pool(exp_count, ctx.oracle, derive_seed(ctx.g.seed, streams::exp_pool));

    fs::create_directories(ctx.g.out_dir);
    std::string sim_path = (fs::path(ctx.g.out_dir) / "sim.csv").string();
    std::string exp_path = (fs::path(ctx.g.out_dir) / "exp.csv").string();
    write_csv(sim, sim_path);
    write_csv(exp, exp_path);
    std::printf("wrote %zu simulation rows to %s\n", sim.samples.size(), sim_path.c_str());
    std::printf("wrote %zu experimental rows to %s\n", exp.samples.size(), exp_path.c_str());
    return {{}, {sim_path, exp_path}};
}

// --- train / compare ----------------------------------------------------------

struct TrainOpts {
    std::string sim_path;
    std::string exp_path;
    std::string model_path;
    std::string baselines = "on";
};

void resolve_data_paths(const Context& ctx, std::string& sim_path, std::string& exp_path) {
    if (sim_path.empty()) sim_path = (fs::path(ctx.g.out_dir) / "sim.csv").string();
    if (exp_path.empty()) exp_path = (fs::path(ctx.g.out_dir) / "exp.csv").string();
}

RunArtifacts cmd_train(Context& ctx, const TrainOpts& opt) {
    if (opt.baselines != "on" && opt.baselines != "off")
        throw ConfigError("--baselines takes 'on' or 'off', got '" + opt.baselines + "'");
    std::string sim_path = opt.sim_path, exp_path = opt.exp_path;
    resolve_data_paths(ctx, sim_path, exp_path);
    std::string model_path = opt.model_path.empty()
                                 ? (fs::path(ctx.g.out_dir) / "model.json").string()
                                 : opt.model_path;

    Dataset sim_all = read_csv(sim_path);
    Dataset exp_all = read_csv(exp_path);
    SplitResult sim = split_dataset(sim_all, sim_split_spec(ctx.g.seed));
    SplitResult exp = split_dataset(exp_all, exp_split_spec(ctx.g.seed));

    fs::create_directories(ctx.g.out_dir);
    RunArtifacts artifacts{{sim_path, exp_path}, {model_path}};
    StackedModel model;
    if (opt.baselines == "on") {
        BaselineComparison cmp =
            compare_baselines(sim.train, exp.train, ctx.hp_sim, ctx.hp_gap, exp.validation);
        model = std::move(cmp.model);
        std::string report = report_csv_header() + report_csv_row("sim_only", cmp.sim_only) +
                             report_csv_row("exp_only", cmp.exp_only) +
                             report_csv_row("stacked", cmp.stacked);
        std::string report_path = (fs::path(ctx.g.out_dir) / "train_report.csv").string();
        write_text_file(report_path, report);
        artifacts.outputs.push_back(report_path);
        std::printf("accuracy on the experimental validation set (%d points):\n", cmp.stacked.n);
        print_report("sim_only", cmp.sim_only);
        print_report("exp_only", cmp.exp_only);
        print_report("stacked", cmp.stacked);
    } else {
        model = fit_stacked(sim.train, exp.train, ctx.hp_sim, ctx.hp_gap);
    }
    save_stacked(model, model_path);
    std::string side = std::string("{\"command\":\"train\",\"seed\":") +
                       std::to_string(ctx.g.seed) + ",\"config_digest\":\"" + ctx.config_digest +
                       "\",\"sim_train_digest\":\"" + model.sim_train_digest +
                       "\",\"exp_train_digest\":\"" + model.exp_train_digest + "\"}\n";
    write_text_file(model_path + ".provenance.json", side);
    std::printf("wrote model to %s\n", model_path.c_str());
    return artifacts;
}

RunArtifacts cmd_compare(Context& ctx, const TrainOpts& opt) {
    std::string sim_path = opt.sim_path, exp_path = opt.exp_path;
    resolve_data_paths(ctx, sim_path, exp_path);

    Dataset sim_all = read_csv(sim_path);
    Dataset exp_all = read_csv(exp_path);
    SplitResult sim = split_dataset(sim_all, sim_split_spec(ctx.g.seed));
    SplitResult exp = split_dataset(exp_all, exp_split_spec(ctx.g.seed));

    BaselineComparison cmp =
        compare_baselines(sim.train, exp.train, ctx.hp_sim, ctx.hp_gap, exp.validation);
    fs::create_directories(ctx.g.out_dir);
    std::string report = report_csv_header() + report_csv_row("sim_only", cmp.sim_only) +
                         report_csv_row("exp_only", cmp.exp_only) +
                         report_csv_row("stacked", cmp.stacked);
    std::string report_path = (fs::path(ctx.g.out_dir) / "compare_report.csv").string();
    write_text_file(report_path, report);
    std::printf("accuracy on the experimental validation set (%d points):\n", cmp.stacked.n);
    print_report("sim_only", cmp.sim_only);
    print_report("exp_only", cmp.exp_only);
    print_report("stacked", cmp.stacked);
    return {{sim_path, exp_path}, {report_path}};
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateOpts {
    std::string model_path;
    std::string data_path;
};

RunArtifacts cmd_evaluate(Context& ctx, const EvaluateOpts& opt) {
    StackedModel model = load_stacked(opt.model_path);
    Dataset data = read_csv(opt.data_path);
    AccuracyReport r =
        evaluate([&](const OperatingPoint& pt) { return model.predict(pt); }, data.samples);
    print_report("stacked", r);
    fs::create_directories(ctx.g.out_dir);
    std::string report_path = (fs::path(ctx.g.out_dir) / "evaluate_report.csv").string();
    write_text_file(report_path, report_csv_header() + report_csv_row("stacked", r));
    return {{opt.model_path, opt.data_path}, {report_path}};
}

// --- optimize / sweep -----------------------------------------------------------

struct OptimizeOpts {
    std::string model_path;
    double power = 600.0;
};

PsoResult optimize_at(const StackedModel& model, double power, PsoConfig cfg) {
    if (!(power >= ranges::p_min && power <= ranges::p_max))
        throw RangeError("p_watts = " + fd(power) + " outside [" + fd(ranges::p_min) + ", " +
                         fd(ranges::p_max) + "]");
    cfg.bounds = {{ranges::d1_min, ranges::d1_max}, {ranges::d2_min, ranges::d2_max}};
    auto objective = [&](const std::vector<double>& x) {
        return model.predict({x[0], x[1], power});
    };
    return pso_optimize(objective, cfg);
}

RunArtifacts cmd_optimize(Context& ctx, const OptimizeOpts& opt) {
    std::string model_path = opt.model_path.empty()
                                 ? (fs::path(ctx.g.out_dir) / "model.json").string()
                                 : opt.model_path;
    StackedModel model = load_stacked(model_path);
    PsoResult res = optimize_at(model, opt.power, ctx.pso);

    GridArgmax grid =
        grid_argmax([&](double d1, double d2) { return model.predict({d1, d2, opt.power}); }, 201);

    fs::create_directories(ctx.g.out_dir);
    std::string trace_path =
        (fs::path(ctx.g.out_dir) / ("optimize_trace_p" + fd(opt.power) + ".csv")).string();
    std::string trace = "iteration,incumbent_eta\n";
    for (std::size_t i = 0; i < res.trace.size(); ++i)
        trace += std::to_string(i) + "," + fd(res.trace[i]) + "\n";
    write_text_file(trace_path, trace);

    std::printf("optimum at P = %s W: d1 = %.6f, d2 = %.6f, eta = %.4f %%\n", fd(opt.power).c_str(),
                res.best_position[0], res.best_position[1], res.best_value);
    std::printf("201x201 grid check: d1 = %.6f, d2 = %.6f, eta = %.4f %%\n", grid.d1, grid.d2,
                grid.value);
    std::printf("pso-grid discrepancy: |d d1| = %.6f, |d d2| = %.6f, |d eta| = %.6f pp\n",
                std::abs(res.best_position[0] - grid.d1), std::abs(res.best_position[1] - grid.d2),
                std::abs(res.best_value - grid.value));
    return {{model_path}, {trace_path}};
}

struct SweepOpts {
    std::string model_path;
    std::string powers_spec;
    bool oracle_check = false;
};

std::vector<double> parse_powers(const std::string& spec) {
    std::vector<double> out;
    if (spec.empty()) {
        // the p-axis values of the default simulation grid
        for (int k = 0; k < 20; ++k)
            out.push_back(detail::grid_value(ranges::p_min, ranges::p_max, k, 20));
        return out;
    }
    if (spec.find(':') != std::string::npos) {
        double lo = 0, hi = 0, step = 0;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0)
            throw ConfigError("power range must look like 200:2000:200, got '" + spec + "'");
        for (double p = lo; p <= hi + 1e-9; p += step) out.push_back(p);
        if (out.empty()) throw ConfigError("power range '" + spec + "' is empty");
        return out;
    }
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        double v = 0;
        if (std::sscanf(tok.c_str(), "%lf", &v) != 1)
            throw ConfigError("bad power value '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty power list");
    return out;
}

RunArtifacts cmd_sweep(Context& ctx, const SweepOpts& opt) {
    std::string model_path = opt.model_path.empty()
                                 ? (fs::path(ctx.g.out_dir) / "model.json").string()
                                 : opt.model_path;
    StackedModel model = load_stacked(model_path);
    std::vector<double> powers = parse_powers(opt.powers_spec);

    std::string body = "p_watts,d1_opt,d2_opt,eta_pred,eta_hw_check\n";
    for (std::size_t i = 0; i < powers.size(); ++i) {
        PsoConfig cfg = ctx.pso;
        cfg.seed = derive_seed(ctx.pso.seed, i);
        PsoResult res = optimize_at(model, powers[i], cfg);
        std::string check;
        if (opt.oracle_check)
            check = fd(eta_hw(ctx.oracle, {res.best_position[0], res.best_position[1], powers[i]}));
        body += fd(powers[i]) + "," + fd(res.best_position[0]) + "," + fd(res.best_position[1]) +
                "," + fd(res.best_value) + "," + check + "\n";
    }
    fs::create_directories(ctx.g.out_dir);
    std::string sweep_path = (fs::path(ctx.g.out_dir) / "sweep.csv").string();
    write_text_file(sweep_path, body);
    std::printf("wrote %zu sweep rows to %s\n", powers.size(), sweep_path.c_str());
    return {{model_path}, {sweep_path}};
}

// --- data-size-sweep -------------------------------------------------------------

struct SizeSweepOpts {
    std::string sim_path;
    std::string exp_path;
    std::string fractions = "0.1,0.25,0.5,1.0";
    int repeats = 10;
};

RunArtifacts cmd_data_size_sweep(Context& ctx, const SizeSweepOpts& opt) {
    std::string sim_path = opt.sim_path, exp_path = opt.exp_path;
    resolve_data_paths(ctx, sim_path, exp_path);

    std::vector<double> fractions;
    std::istringstream in(opt.fractions);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        double v = 0;
        if (std::sscanf(tok.c_str(), "%lf", &v) != 1)
            throw ConfigError("bad fraction '" + tok + "'");
        fractions.push_back(v);
    }

    Dataset sim_all = read_csv(sim_path);
    Dataset exp_all = read_csv(exp_path);
    SplitResult sim = split_dataset(sim_all, sim_split_spec(ctx.g.seed));
    SplitResult exp = split_dataset(exp_all, exp_split_spec(ctx.g.seed));

    GbrtModel sim_model = fit_landscape(sim.train, ctx.hp_sim);
    std::vector<DataSizePoint> table =
        data_size_sweep(sim_model, exp.train, exp.validation, ctx.hp_gap, fractions, opt.repeats,
                        derive_seed(ctx.g.seed, streams::size_sweep));

    std::string body = "fraction,mean_accuracy,min_accuracy,max_accuracy,mean_abs_error_pp\n";
    for (const DataSizePoint& row : table) {
        body += fd(row.fraction) + "," + fd(row.mean_accuracy) + "," + fd(row.min_accuracy) + "," +
                fd(row.max_accuracy) + "," + fd(row.mean_abs_error_pp) + "\n";
        std::printf(
            "fraction %.2f: accuracy mean %.4f %% (min %.4f, max %.4f), mean |err| %.4f pp\n",
            row.fraction, row.mean_accuracy, row.min_accuracy, row.max_accuracy,
            row.mean_abs_error_pp);
    }
    fs::create_directories(ctx.g.out_dir);
    std::string out_path = (fs::path(ctx.g.out_dir) / "data_size_sweep.csv").string();
    write_text_file(out_path, body);
    return {{sim_path, exp_path}, {out_path}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Converter efficiency surrogate: dataset generation, two-stage boosted-tree "
                 "training, and swarm search for optimal modulation parameters"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Master seed; every stage derives its own stream");
    app.add_option("--config", g.config_path, "Path to a key = value config file");
    app.add_option("--out-dir", g.out_dir, "Directory for generated artifacts");

    GenerateOpts gen_opt;
    CLI::App* gen = app.add_subcommand("generate", "Generate simulation and experimental datasets");
    gen->add_option("--sim-grid", gen_opt.sim_grid_flag, "Simulation grid as N1xN2xN3");
    gen->add_option("--exp-count", gen_opt.exp_count_flag, "Number of experimental points");

    TrainOpts train_opt;
    CLI::App* train = app.add_subcommand("train", "Split datasets, fit the two-stage model");
    train->add_option("--sim", train_opt.sim_path, "Simulation CSV (default <out-dir>/sim.csv)");
    train->add_option("--exp", train_opt.exp_path, "Experimental CSV (default <out-dir>/exp.csv)");
    train->add_option("--model", train_opt.model_path, "Output model path");
    train->add_option("--baselines", train_opt.baselines,
                      "on (default) fits and reports sim-only/exp-only baselines, off skips them");

    TrainOpts compare_opt;
    CLI::App* compare = app.add_subcommand("compare", "Three-way baseline accuracy comparison");
    compare->add_option("--sim", compare_opt.sim_path, "Simulation CSV");
    compare->add_option("--exp", compare_opt.exp_path, "Experimental CSV");

    EvaluateOpts eval_opt;
    CLI::App* eval = app.add_subcommand("evaluate", "Score a saved model against a CSV dataset");
    eval->add_option("--model", eval_opt.model_path, "Model file")->required();
    eval->add_option("--data", eval_opt.data_path, "Dataset CSV")->required();

    OptimizeOpts opt_opt;
    CLI::App* optimize = app.add_subcommand("optimize", "Swarm-search the surrogate at one load");
    optimize->add_option("--model", opt_opt.model_path,
                         "Model file (default <out-dir>/model.json)");
    optimize->add_option("--power", opt_opt.power, "Load in watts")->required();

    SweepOpts sweep_opt;
    CLI::App* sweep = app.add_subcommand("sweep", "Optimize across a list of loads");
    sweep->add_option("--model", sweep_opt.model_path, "Model file (default <out-dir>/model.json)");
    sweep->add_option("--powers", sweep_opt.powers_spec,
                      "Comma list or lo:hi:step (default: the 20 grid loads)");
    sweep->add_flag("--oracle-check", sweep_opt.oracle_check,
                    "Fill eta_hw_check from the synthetic oracle");

    SizeSweepOpts size_opt;
    CLI::App* size_sweep =
        app.add_subcommand("data-size-sweep", "Stage-II accuracy vs experimental pool size");
    size_sweep->add_option("--sim", size_opt.sim_path, "Simulation CSV");
    size_sweep->add_option("--exp", size_opt.exp_path, "Experimental CSV");
    size_sweep->add_option("--fractions", size_opt.fractions, "Comma list in (0, 1]");
    size_sweep->add_option("--repeats", size_opt.repeats, "Subsample repeats per fraction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    auto started = std::chrono::steady_clock::now();
    Context ctx;
    ctx.g = g;
    std::string command = app.get_subcommands().front()->get_name();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };
    try {
        load_context(ctx);
        RunArtifacts artifacts;
        if (gen->parsed()) artifacts = cmd_generate(ctx, gen_opt);
        else if (train->parsed()) artifacts = cmd_train(ctx, train_opt);
        else if (compare->parsed()) artifacts = cmd_compare(ctx, compare_opt);
        else if (eval->parsed()) artifacts = cmd_evaluate(ctx, eval_opt);
        else if (optimize->parsed()) artifacts = cmd_optimize(ctx, opt_opt);
        else if (sweep->parsed()) artifacts = cmd_sweep(ctx, sweep_opt);
        else if (size_sweep->parsed()) artifacts = cmd_data_size_sweep(ctx, size_opt);
        append_manifest(ctx, command, "ok", artifacts, elapsed());
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        append_manifest(ctx, command, "config_error", {}, elapsed());
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        append_manifest(ctx, command, "data_error", {}, elapsed());
        return 3;
    } catch (const RangeError& e) {
        std::cerr << "range error: " << e.what() << "\n";
        append_manifest(ctx, command, "range_error", {}, elapsed());
        return 4;
    }
    return 0;
}
