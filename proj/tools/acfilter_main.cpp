// Command-line pipeline around the accidental-click filtering engine:
// synthetic marketplace generation, the three click-trainer modes plus the
// auxiliary AC model, offline evaluation, dwell-time analysis, threshold
// sweeps and the serving/auction replay.

#include <fcntl.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/click_trainer.hpp"
#include "acfilter/evaluator.hpp"
#include "acfilter/event_log.hpp"
#include "acfilter/model_io.hpp"
#include "acfilter/pipeline.hpp"
#include "acfilter/run_config.hpp"
#include "acfilter/serving_sim.hpp"
#include "acfilter/simulator.hpp"

namespace fs = std::filesystem;
using namespace acfilter;

namespace {

struct RunDir {
    fs::path dir;
    fs::path lock;

    explicit RunDir(const fs::path& d) : dir(d), lock(d / "lock") {
        fs::create_directories(dir);
        const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw std::runtime_error("run directory is locked (remove " + lock.string() +
                                     " if no other command is writing it)");
        }
        ::close(fd);
    }
    ~RunDir() {
        std::error_code ec;
        fs::remove(lock, ec);
    }
};

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args.config_path);
    if (args.seed) cfg.apply_seed_override(*args.seed);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (const char* env = std::getenv("ACFILTER_OUT"); env != nullptr && *env != '\0') cfg.out_dir = env;
    return cfg;
}

void archive_config(const CommonArgs& args, const RunConfig& cfg, const fs::path& out) {
    std::ifstream src(args.config_path, std::ios::binary);
    std::ofstream verbatim(out / "config.json", std::ios::binary | std::ios::trunc);
    verbatim << src.rdbuf();
    std::ofstream effective(out / "config.effective.json", std::ios::trunc);
    effective << run_config_to_json(cfg).dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

LatentFactorModel load_seed_model(const std::string& path, const FeatureSchema& expected) {
    LoadedModel loaded = load_model(path);
    require_schema_match(expected, loaded.model.schema(), "seed model " + path);
    return std::move(loaded.model);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonArgs& args, std::optional<std::uint64_t> n_override) {
    RunConfig cfg = resolve_config(args);
    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    const GroundTruthWorld world = build_world(cfg.world);
    save_world(world, run.dir / "world.json");

    const std::uint64_t n_train = n_override.value_or(cfg.streams.n_train);
    {
        EventLogWriter w(run.dir / "events.jsonl");
        generate_events(world, cfg.train_stream_seed(), 0, n_train, [&](const Event& e) { w.write(e); });
        w.close();
        std::cerr << "wrote " << w.count() << " events to " << (run.dir / "events.jsonl").string() << "\n";
    }
    if (!n_override && cfg.streams.n_holdout > 0) {
        EventLogWriter w(run.dir / "holdout.jsonl");
        generate_events(world, cfg.holdout_stream_seed(), 0, cfg.streams.n_holdout,
                        [&](const Event& e) { w.write(e); });
        w.close();
        std::cerr << "wrote " << w.count() << " holdout events\n";
    }
    return 0;
}

int cmd_train_ac(const CommonArgs& args, const std::string& log_path, std::optional<double> tau,
                 std::optional<double> downsample) {
    RunConfig cfg = resolve_config(args);
    if (tau) cfg.ac.tau_s = *tau;
    if (downsample) cfg.ac.downsample_r = *downsample;
    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    AcTrainer trainer(cfg.ac_training_config());
    train_ac(trainer, file_event_source(log_path));
    save_model(trainer.model(), run.dir / "model_ac.bin",
               {{kMetaDownsampleR, cfg.ac.downsample_r}});
    nlohmann::json report;
    report["model"] = "ac";
    report["tau_s"] = cfg.ac.tau_s;
    report["downsample_r"] = cfg.ac.downsample_r;
    report["counters"] = ac_counters_to_json(trainer.counters());
    write_json(run.dir / "train_report_ac.json", report);
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& log_path, std::optional<std::string> mode,
              std::optional<double> tau, std::optional<double> downsample,
              std::optional<std::uint64_t> period, const std::string& ac_model_path,
              const std::string& seed_model_path) {
    RunConfig cfg = resolve_config(args);
    if (mode) cfg.click.mode = click_mode_from_name(*mode);
    if (tau) {
        cfg.click.tau_s = *tau;
        cfg.ac.tau_s = *tau;
    }
    if (downsample) {
        cfg.click.downsample_r = *downsample;
        cfg.ac.downsample_r = *downsample;
    }
    if (period) cfg.click.period = *period;
    if (!ac_model_path.empty()) cfg.click.ac_model = ac_model_path;
    if (!seed_model_path.empty()) cfg.click.seed_model = seed_model_path;

    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    const ClickTrainingConfig click_cfg = cfg.click_training_config();
    const EventSource events = file_event_source(log_path);
    const std::string mode_name = click_mode_name(click_cfg.mode);

    auto make_click_trainer = [&](const AcLabelSource* labels) {
        if (!cfg.click.seed_model.empty()) {
            return ClickTrainer(click_cfg, load_seed_model(cfg.click.seed_model, click_cfg.schema), labels);
        }
        return ClickTrainer(click_cfg, labels);
    };

    nlohmann::json report;
    report["mode"] = mode_name;
    report["tau_s"] = click_cfg.tau_ac_s;
    report["downsample_r"] = click_cfg.downsample_r;

    if (click_cfg.mode != ClickMode::kUnbiased) {
        ClickTrainer trainer = make_click_trainer(nullptr);
        train_click(trainer, events);
        save_model(trainer.model(), run.dir / ("model_" + mode_name + ".bin"),
                   {{kMetaDownsampleR, click_cfg.downsample_r}});
        report["counters"] = click_counters_to_json(trainer.counters());
        write_json(run.dir / ("train_report_" + mode_name + ".json"), report);
        return 0;
    }

    if (!cfg.click.ac_model.empty()) {
        // reuse a previously trained AC model; one pass over the log
        LoadedModel ac = load_model(cfg.click.ac_model);
        if (auto it = ac.meta.find(kMetaDownsampleR);
            it != ac.meta.end() && it->second != click_cfg.downsample_r) {
            throw std::runtime_error("AC model was trained at downsample_r=" + std::to_string(it->second) +
                                     " but the click trainer uses " +
                                     std::to_string(click_cfg.downsample_r));
        }
        AcModelLabelSource labels(ac.model);
        ClickTrainer trainer = make_click_trainer(&labels);
        train_click(trainer, events);
        save_model(trainer.model(), run.dir / "model_unbiased.bin",
                   {{kMetaDownsampleR, click_cfg.downsample_r}});
        report["counters"] = click_counters_to_json(trainer.counters());
        report["ac_model"] = cfg.click.ac_model;
        write_json(run.dir / "train_report_unbiased.json", report);
        return 0;
    }

    // inline two-block pipeline: AC pass, then click pass
    AcTrainer ac(cfg.ac_training_config());
    AcModelLabelSource labels(ac.model());
    ClickTrainer trainer = make_click_trainer(&labels);
    run_unbiased_training(events, ac, trainer, cfg.click.period);

    save_model(ac.model(), run.dir / "model_ac.bin", {{kMetaDownsampleR, cfg.ac.downsample_r}});
    nlohmann::json ac_report;
    ac_report["model"] = "ac";
    ac_report["tau_s"] = cfg.ac.tau_s;
    ac_report["downsample_r"] = cfg.ac.downsample_r;
    ac_report["counters"] = ac_counters_to_json(ac.counters());
    write_json(run.dir / "train_report_ac.json", ac_report);

    save_model(trainer.model(), run.dir / "model_unbiased.bin",
               {{kMetaDownsampleR, click_cfg.downsample_r}});
    report["counters"] = click_counters_to_json(trainer.counters());
    report["period"] = cfg.click.period;
    write_json(run.dir / "train_report_unbiased.json", report);
    return 0;
}

ModelSnapshot snapshot_from_file(const std::string& path, std::optional<double> downsample) {
    LoadedModel loaded = load_model(path);
    double r = downsample.value_or(1.0);
    if (!downsample) {
        if (auto it = loaded.meta.find(kMetaDownsampleR); it != loaded.meta.end()) r = it->second;
    }
    return serve_snapshot(loaded.model, r);
}

int cmd_evaluate(const CommonArgs& args, const std::string& log_path, const std::string& model_path,
                 std::optional<double> downsample, std::optional<std::string> filter_expr) {
    RunConfig cfg = resolve_config(args);
    if (filter_expr) cfg.eval.filter = *filter_expr;
    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    const ModelSnapshot snapshot = snapshot_from_file(model_path, downsample);
    const EventFilter filter = parse_filter(cfg.eval.filter);
    const EvalReport report = evaluate(snapshot, file_event_source(log_path), filter, cfg.eval.auc);
    nlohmann::json j = eval_report_to_json(report);
    j["model"] = model_path;
    j["filter"] = cfg.eval.filter;
    write_json(run.dir / "eval_report.json", j);
    write_text(run.dir / "eval_segments.csv", eval_report_to_csv(report));
    std::cerr << "logloss_mean=" << report.logloss_mean() << " n=" << report.n_events() << "\n";
    return 0;
}

int cmd_dwell(const CommonArgs& args, const std::string& log_path) {
    RunConfig cfg = resolve_config(args);
    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    const auto edges = default_dwell_bin_edges(cfg.dwell.bin_width_s, cfg.dwell.max_finite_s);
    const DwellReport report =
        dwell_analysis(file_event_source(log_path), edges, cfg.dwell.thresholds, cfg.dwell.slices);
    write_json(run.dir / "dwell_report.json", dwell_report_to_json(report));
    write_text(run.dir / "dwell_pmf.csv", dwell_pmf_csv(report));
    write_text(run.dir / "dwell_shares.csv", dwell_shares_csv(report));
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& train_log, const std::string& holdout_log,
              const std::vector<double>& grid_override) {
    RunConfig cfg = resolve_config(args);
    if (!grid_override.empty()) cfg.sweep.tau_grid = grid_override;
    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    SweepConfig sweep;
    sweep.tau_grid = cfg.sweep.tau_grid;
    sweep.ac = cfg.ac_training_config();
    sweep.click = cfg.click_training_config();
    sweep.baseline = sweep.click;
    sweep.eval_filter = parse_filter(cfg.eval.filter.empty() ? "dwell_logged=false" : cfg.eval.filter);
    const auto rows =
        threshold_sweep(file_event_source(train_log), file_event_source(holdout_log), sweep);
    write_json(run.dir / "sweep.json", sweep_to_json(rows));
    write_text(run.dir / "sweep.csv", sweep_to_csv(rows));
    for (const auto& row : rows) {
        std::cerr << "tau=" << row.tau << " lift=" << row.lift_pct << "%"
                  << (row.best ? "  <- best" : "") << "\n";
    }
    return 0;
}

int cmd_serve_sim(const CommonArgs& args, const std::string& world_path,
                  const std::vector<std::string>& snapshot_specs, std::optional<std::uint64_t> auctions,
                  std::optional<std::uint32_t> k, bool with_oracle) {
    RunConfig cfg = resolve_config(args);
    if (auctions) cfg.serve.n_auctions = *auctions;
    if (k) cfg.serve.candidate_k = *k;
    if (with_oracle) cfg.serve.include_oracle = true;
    RunDir run(cfg.out_dir);
    archive_config(args, cfg, run.dir);

    const GroundTruthWorld world = load_world(world_path);
    std::vector<std::unique_ptr<Scorer>> owned;
    std::vector<std::pair<std::string, const Scorer*>> snapshots;
    for (const auto& spec : snapshot_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("snapshot spec '" + spec + "' must be NAME=MODEL_FILE");
        }
        owned.push_back(std::make_unique<ModelSnapshot>(
            snapshot_from_file(spec.substr(eq + 1), std::nullopt)));
        snapshots.emplace_back(spec.substr(0, eq), owned.back().get());
    }
    if (cfg.serve.include_oracle) {
        owned.push_back(std::make_unique<GroundTruthScorer>(world));
        snapshots.emplace_back("oracle", owned.back().get());
    }

    ServeConfig scfg;
    scfg.n_auctions = cfg.serve.n_auctions;
    scfg.candidate_k = cfg.serve.candidate_k;
    scfg.seed = cfg.derived_seed("serve");
    const ServeReport report = simulate_serving(world, snapshots, scfg);
    write_json(run.dir / "serve_report.json", serve_report_to_json(report));
    write_text(run.dir / "serve.csv", serve_report_to_csv(report));
    for (const auto& m : report.modes) {
        std::cerr << m.mode << ": cpm=" << m.cpm << " expected_cpm=" << m.expected_cpm << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming CTR trainer with unbiased accidental-click filtering"};
    app.require_subcommand(1);

    CommonArgs sim_args;
    std::optional<std::uint64_t> sim_n;
    auto* sim = app.add_subcommand("simulate", "build a world and generate event logs");
    add_common(sim, sim_args);
    sim->add_option("--n", sim_n, "number of events (overrides streams.n_train; skips holdout)");

    CommonArgs train_args;
    std::string train_log;
    std::optional<std::string> train_mode;
    std::optional<double> train_tau, train_r;
    std::optional<std::uint64_t> train_period;
    std::string train_ac_model, train_seed_model;
    auto* train = app.add_subcommand("train", "train a click model on an event log");
    add_common(train, train_args);
    train->add_option("--log", train_log, "training event log (JSONL)")->required();
    train->add_option("--mode", train_mode, "agnostic | filtered | filtered-drop | unbiased");
    train->add_option("--tau", train_tau, "AC dwell-time threshold in seconds");
    train->add_option("--downsample", train_r, "skip down-sampling factor R");
    train->add_option("--period", train_period, "events per training period (0 = whole log)");
    train->add_option("--ac-model", train_ac_model, "pre-trained AC model file (unbiased mode)");
    train->add_option("--seed-model", train_seed_model, "model file to continue training from");

    CommonArgs trainac_args;
    std::string trainac_log;
    std::optional<double> trainac_tau, trainac_r;
    auto* trainac = app.add_subcommand("train-ac", "train the auxiliary AC model on an event log");
    add_common(trainac, trainac_args);
    trainac->add_option("--log", trainac_log, "training event log (JSONL)")->required();
    trainac->add_option("--tau", trainac_tau, "AC dwell-time threshold in seconds");
    trainac->add_option("--downsample", trainac_r, "skip down-sampling factor R");

    CommonArgs eval_args;
    std::string eval_log, eval_model;
    std::optional<double> eval_r;
    std::optional<std::string> eval_filter;
    auto* eval = app.add_subcommand("evaluate", "score a holdout log with a trained model");
    add_common(eval, eval_args);
    eval->add_option("--log", eval_log, "holdout event log")->required();
    eval->add_option("--model", eval_model, "model file")->required();
    eval->add_option("--downsample", eval_r, "override the snapshot correction factor");
    eval->add_option("--filter", eval_filter, "event filter, e.g. dwell_logged=false");

    CommonArgs dwell_args;
    std::string dwell_log;
    auto* dwell = app.add_subcommand("dwell", "dwell-time PMFs and AC shares");
    add_common(dwell, dwell_args);
    dwell->add_option("--log", dwell_log, "event log")->required();

    CommonArgs sweep_args;
    std::string sweep_train, sweep_holdout;
    std::vector<double> sweep_grid;
    auto* sweep = app.add_subcommand("sweep", "grid search over the AC threshold");
    add_common(sweep, sweep_args);
    sweep->add_option("--train-log", sweep_train, "training event log")->required();
    sweep->add_option("--holdout-log", sweep_holdout, "holdout event log")->required();
    sweep->add_option("--grid", sweep_grid, "thresholds in seconds")->delimiter(',');

    CommonArgs serve_args;
    std::string serve_world;
    std::vector<std::string> serve_snapshots;
    std::optional<std::uint64_t> serve_auctions;
    std::optional<std::uint32_t> serve_k;
    bool serve_oracle = false;
    auto* serve = app.add_subcommand("serve-sim", "auction replay over scoring snapshots");
    add_common(serve, serve_args);
    serve->add_option("--world", serve_world, "world file from simulate")->required();
    serve->add_option("--snapshot", serve_snapshots, "NAME=MODEL_FILE (repeatable)");
    serve->add_option("--auctions", serve_auctions, "number of auctions");
    serve->add_option("--k", serve_k, "candidate ads per auction");
    serve->add_flag("--oracle", serve_oracle, "include the ground-truth snapshot");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_args, sim_n);
        if (train->parsed()) {
            return cmd_train(train_args, train_log, train_mode, train_tau, train_r, train_period,
                             train_ac_model, train_seed_model);
        }
        if (trainac->parsed()) return cmd_train_ac(trainac_args, trainac_log, trainac_tau, trainac_r);
        if (eval->parsed()) return cmd_evaluate(eval_args, eval_log, eval_model, eval_r, eval_filter);
        if (dwell->parsed()) return cmd_dwell(dwell_args, dwell_log);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_train, sweep_holdout, sweep_grid);
        if (serve->parsed()) {
            return cmd_serve_sim(serve_args, serve_world, serve_snapshots, serve_auctions, serve_k,
                                 serve_oracle);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 1;
}
