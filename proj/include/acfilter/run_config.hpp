#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/click_trainer.hpp"
#include "acfilter/hash.hpp"
#include "acfilter/model_io.hpp"
#include "acfilter/simulator.hpp"

namespace acfilter {

// One human-editable document drives every command. The master seed derives
// stream, sampling and model-init seeds (and the world seed, unless the
// world block sets one explicitly), so a single --seed override reruns the
// whole experiment on fresh randomness.
struct StreamSettings {
    std::uint64_t n_train = 1000000;
    std::uint64_t n_holdout = 200000;
};

struct AcSettings {
    double tau_s = 3.0;
    double downsample_r = 1.0;
    ModelHyper hyper = {.dim = 4};
    std::optional<FeatureSchema> schema;  // default_ac_schema() when absent
};

struct ClickSettings {
    ClickMode mode = ClickMode::kUnbiased;
    double tau_s = 3.0;
    double downsample_r = 1.0;
    ModelHyper hyper = {.dim = 16};
    std::uint64_t period = 0;  // 0 = whole log per training period
    std::string seed_model;    // optional model file to continue from
    std::string ac_model;      // optional pre-trained AC model file
    std::optional<FeatureSchema> schema;  // default_click_schema() when absent
};

struct EvalSettings {
    std::string filter;  // parse_filter() expression; empty = all events
    bool auc = true;
};

struct DwellSettings {
    double bin_width_s = 0.5;
    double max_finite_s = 30.0;
    std::vector<double> thresholds = {1.0, 2.0, 3.0, 5.0, 8.0};
    std::vector<std::string> slices = {"device", "demo", "involvement", "segment"};
};

struct SweepSettings {
    std::vector<double> tau_grid = {1.0, 2.0, 3.0, 5.0, 8.0};
};

struct ServeSettings {
    std::uint64_t n_auctions = 100000;
    std::uint32_t candidate_k = 20;
    bool include_oracle = true;
};

struct RunConfig {
    std::string out_dir = "run_out";
    std::uint64_t seed = 1;
    bool world_seed_explicit = false;
    WorldConfig world;
    StreamSettings streams;
    AcSettings ac;
    ClickSettings click;
    EvalSettings eval;
    DwellSettings dwell;
    SweepSettings sweep;
    ServeSettings serve;

    std::uint64_t derived_seed(const char* role) const { return mix64(seed, fnv1a64(role)); }
    std::uint64_t train_stream_seed() const { return derived_seed("train-stream"); }
    std::uint64_t holdout_stream_seed() const { return derived_seed("holdout-stream"); }
    std::uint64_t sampling_seed() const { return derived_seed("sampling"); }
    std::uint64_t ac_model_seed() const { return derived_seed("ac-model"); }
    std::uint64_t click_model_seed() const { return derived_seed("click-model"); }

    void apply_seed_override(std::uint64_t s) {
        seed = s;
        if (!world_seed_explicit) world.seed = derived_seed("world");
    }

    AcTrainingConfig ac_training_config() const {
        AcTrainingConfig cfg;
        cfg.tau_ac_s = ac.tau_s;
        cfg.downsample_r = ac.downsample_r;
        cfg.hyper = ac.hyper;
        cfg.schema = ac.schema ? *ac.schema : default_ac_schema();
        cfg.model_seed = ac_model_seed();
        cfg.sampling_seed = sampling_seed();
        return cfg;
    }

    ClickTrainingConfig click_training_config() const {
        ClickTrainingConfig cfg;
        cfg.mode = click.mode;
        cfg.tau_ac_s = click.tau_s;
        cfg.downsample_r = click.downsample_r;
        cfg.hyper = click.hyper;
        cfg.schema = click.schema ? *click.schema : default_click_schema();
        cfg.model_seed = click_model_seed();
        cfg.sampling_seed = sampling_seed();
        return cfg;
    }
};

namespace detail_cfg {

inline ModelHyper hyper_from_json(const nlohmann::json& j, ModelHyper base) {
    base.dim = j.value("dim", base.dim);
    base.step_size = j.value("step_size", base.step_size);
    base.adagrad_epsilon = j.value("adagrad_epsilon", base.adagrad_epsilon);
    base.l2_lambda = j.value("l2_lambda", base.l2_lambda);
    base.init_sigma = j.value("init_sigma", base.init_sigma);
    return base;
}

inline nlohmann::json hyper_to_json(const ModelHyper& h) {
    return nlohmann::json{{"dim", h.dim},
                          {"step_size", h.step_size},
                          {"adagrad_epsilon", h.adagrad_epsilon},
                          {"l2_lambda", h.l2_lambda},
                          {"init_sigma", h.init_sigma}};
}

}  // namespace detail_cfg

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    if (j.contains("world")) {
        c.world = world_config_from_json(j.at("world"));
        c.world_seed_explicit = j.at("world").contains("seed");
    }
    if (!c.world_seed_explicit) c.world.seed = c.derived_seed("world");
    if (j.contains("streams")) {
        c.streams.n_train = j.at("streams").value("n_train", c.streams.n_train);
        c.streams.n_holdout = j.at("streams").value("n_holdout", c.streams.n_holdout);
    }
    if (j.contains("ac")) {
        const auto& a = j.at("ac");
        c.ac.tau_s = a.value("tau_s", c.ac.tau_s);
        c.ac.downsample_r = a.value("downsample_r", c.ac.downsample_r);
        c.ac.hyper = detail_cfg::hyper_from_json(a.value("hyper", nlohmann::json::object()), c.ac.hyper);
        if (a.contains("schema")) c.ac.schema = schema_from_json(nlohmann::json{{"features", a.at("schema")}});
    }
    if (j.contains("click")) {
        const auto& k = j.at("click");
        c.click.mode = click_mode_from_name(k.value("mode", std::string("unbiased")));
        c.click.tau_s = k.value("tau_s", c.click.tau_s);
        c.click.downsample_r = k.value("downsample_r", c.click.downsample_r);
        c.click.hyper = detail_cfg::hyper_from_json(k.value("hyper", nlohmann::json::object()), c.click.hyper);
        c.click.period = k.value("period", c.click.period);
        c.click.seed_model = k.value("seed_model", c.click.seed_model);
        c.click.ac_model = k.value("ac_model", c.click.ac_model);
        if (k.contains("schema")) c.click.schema = schema_from_json(nlohmann::json{{"features", k.at("schema")}});
    }
    if (j.contains("eval")) {
        c.eval.filter = j.at("eval").value("filter", c.eval.filter);
        c.eval.auc = j.at("eval").value("auc", c.eval.auc);
    }
    if (j.contains("dwell_analysis")) {
        const auto& d = j.at("dwell_analysis");
        c.dwell.bin_width_s = d.value("bin_width_s", c.dwell.bin_width_s);
        c.dwell.max_finite_s = d.value("max_finite_s", c.dwell.max_finite_s);
        if (d.contains("thresholds")) c.dwell.thresholds = d.at("thresholds").get<std::vector<double>>();
        if (d.contains("slices")) c.dwell.slices = d.at("slices").get<std::vector<std::string>>();
    }
    if (j.contains("sweep") && j.at("sweep").contains("tau_grid")) {
        c.sweep.tau_grid = j.at("sweep").at("tau_grid").get<std::vector<double>>();
    }
    if (j.contains("serve")) {
        const auto& s = j.at("serve");
        c.serve.n_auctions = s.value("n_auctions", c.serve.n_auctions);
        c.serve.candidate_k = s.value("candidate_k", c.serve.candidate_k);
        c.serve.include_oracle = s.value("include_oracle", c.serve.include_oracle);
    }
    return c;
}

/// The effective configuration after seed derivation and CLI overrides;
/// archiving this next to a run's outputs makes the run reproducible from
/// the archive alone.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["world"] = world_config_to_json(c.world);
    j["streams"] = {{"n_train", c.streams.n_train}, {"n_holdout", c.streams.n_holdout}};
    j["ac"] = {{"tau_s", c.ac.tau_s},
               {"downsample_r", c.ac.downsample_r},
               {"hyper", detail_cfg::hyper_to_json(c.ac.hyper)}};
    if (c.ac.schema) j["ac"]["schema"] = schema_to_json(*c.ac.schema).at("features");
    j["click"] = {{"mode", click_mode_name(c.click.mode)},
                  {"tau_s", c.click.tau_s},
                  {"downsample_r", c.click.downsample_r},
                  {"hyper", detail_cfg::hyper_to_json(c.click.hyper)},
                  {"period", c.click.period}};
    if (!c.click.seed_model.empty()) j["click"]["seed_model"] = c.click.seed_model;
    if (!c.click.ac_model.empty()) j["click"]["ac_model"] = c.click.ac_model;
    if (c.click.schema) j["click"]["schema"] = schema_to_json(*c.click.schema).at("features");
    j["eval"] = {{"filter", c.eval.filter}, {"auc", c.eval.auc}};
    j["dwell_analysis"] = {{"bin_width_s", c.dwell.bin_width_s},
                           {"max_finite_s", c.dwell.max_finite_s},
                           {"thresholds", c.dwell.thresholds},
                           {"slices", c.dwell.slices}};
    j["sweep"] = {{"tau_grid", c.sweep.tau_grid}};
    j["serve"] = {{"n_auctions", c.serve.n_auctions},
                  {"candidate_k", c.serve.candidate_k},
                  {"include_oracle", c.serve.include_oracle}};
    return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& ex) {
        throw std::runtime_error("config " + path.string() + ": " + ex.what());
    }
    return run_config_from_json(j);
}

}  // namespace acfilter
