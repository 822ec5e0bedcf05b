#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/event_log.hpp"
#include "acfilter/math.hpp"
#include "acfilter/model.hpp"

namespace acfilter {

enum class ClickMode : std::uint8_t { kAgnostic, kFiltered, kFilteredDrop, kUnbiased };

inline const char* click_mode_name(ClickMode m) {
    switch (m) {
        case ClickMode::kAgnostic: return "agnostic";
        case ClickMode::kFiltered: return "filtered";
        case ClickMode::kFilteredDrop: return "filtered-drop";
        case ClickMode::kUnbiased: return "unbiased";
    }
    return "?";
}

inline ClickMode click_mode_from_name(const std::string& s) {
    if (s == "agnostic") return ClickMode::kAgnostic;
    if (s == "filtered") return ClickMode::kFiltered;
    if (s == "filtered-drop") return ClickMode::kFilteredDrop;
    if (s == "unbiased") return ClickMode::kUnbiased;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

/// Supplies the probability label assigned to negatives in unbiased mode.
/// Production use points this at the auxiliary AC model; tests may inject
/// constants.
struct AcLabelSource {
    virtual ~AcLabelSource() = default;
    virtual double label(const Event& e) const = 0;
};

class AcModelLabelSource final : public AcLabelSource {
public:
    explicit AcModelLabelSource(const LatentFactorModel& m) : model_(&m) {}
    double label(const Event& e) const override { return predict_ac(*model_, e); }

private:
    const LatentFactorModel* model_;
};

struct ClickTrainingConfig {
    ClickMode mode = ClickMode::kAgnostic;
    double tau_ac_s = 3.0;
    double downsample_r = 1.0;
    ModelHyper hyper = {.dim = 16};
    FeatureSchema schema = default_click_schema();
    std::uint64_t model_seed = 2;
    std::uint64_t sampling_seed = 1;

    void validate() const {
        if (tau_ac_s <= 0.0) throw std::invalid_argument("click: tau_ac_s must be > 0");
        if (downsample_r < 1.0) throw std::invalid_argument("click: downsample_r must be >= 1");
        hyper.validate();
        schema.validate();
    }
};

struct ClickCounters {
    std::uint64_t n_ic = 0;          // clicks trained as positives (IC or unlogged dwell)
    std::uint64_t n_ac = 0;          // AC-classified clicks trained on
    std::uint64_t n_ac_dropped = 0;  // only in filtered-drop mode
    std::uint64_t n_skips_kept = 0;
    std::uint64_t n_skips_dropped = 0;
    double label_mass = 0.0;         // sum of labels over trained events
    double loss_sum = 0.0;           // running cross-entropy at pre-update predictions
    std::uint64_t n_trained = 0;

    double mean_loss() const { return n_trained ? loss_sum / static_cast<double>(n_trained) : 0.0; }
};

/// Trains the main click model in one of the comparable modes:
///   agnostic      every click is a 1, kept skips are 0s (production baseline)
///   filtered      ACs become 0s instead (under-predicting baseline)
///   filtered-drop ACs are removed from the stream entirely
///   unbiased      ACs and kept skips take the auxiliary model's prediction
///                 as their label; ACs are never down-sampled
/// Clicks with unrecorded dwell-time count as positives in every mode, and
/// all modes share the skip-sampling decisions for a given seed.
class ClickTrainer {
public:
    ClickTrainer(ClickTrainingConfig cfg, const AcLabelSource* ac_labels = nullptr)
        : cfg_(std::move(cfg)), ac_labels_(ac_labels),
          model_(cfg_.schema, cfg_.hyper, cfg_.model_seed) {
        cfg_.validate();
        check_label_source();
    }

    ClickTrainer(ClickTrainingConfig cfg, LatentFactorModel seed_model,
                 const AcLabelSource* ac_labels = nullptr)
        : cfg_(std::move(cfg)), ac_labels_(ac_labels), model_(std::move(seed_model)) {
        cfg_.validate();
        check_label_source();
        if (model_.schema().digest() != cfg_.schema.digest()) {
            throw std::invalid_argument("click: seed model schema does not match config schema");
        }
    }

    void observe(const Event& e) {
        if (e.clicked) {
            observe_click(e);
        } else {
            if (!keep_skip(cfg_.sampling_seed, e.event_id, cfg_.downsample_r)) {
                ++counters_.n_skips_dropped;
                return;
            }
            ++counters_.n_skips_kept;
            train(e, cfg_.mode == ClickMode::kUnbiased ? ac_labels_->label(e) : 0.0);
        }
    }

    const LatentFactorModel& model() const { return model_; }
    LatentFactorModel& model() { return model_; }
    const ClickCounters& counters() const { return counters_; }
    const ClickTrainingConfig& config() const { return cfg_; }

private:
    void check_label_source() const {
        if (cfg_.mode == ClickMode::kUnbiased && ac_labels_ == nullptr) {
            throw std::invalid_argument("unbiased mode requires an AC model");
        }
        if (cfg_.mode != ClickMode::kUnbiased && ac_labels_ != nullptr) {
            throw std::invalid_argument(std::string(click_mode_name(cfg_.mode)) +
                                        " mode must not reference an AC model");
        }
    }

    void observe_click(const Event& e) {
        const ClickClass cls = classify_click(e, cfg_.tau_ac_s);
        if (cls != ClickClass::kAc) {
            ++counters_.n_ic;
            train(e, 1.0);
            return;
        }
        switch (cfg_.mode) {
            case ClickMode::kAgnostic:
                ++counters_.n_ac;
                train(e, 1.0);
                break;
            case ClickMode::kFiltered:
                ++counters_.n_ac;
                train(e, 0.0);
                break;
            case ClickMode::kFilteredDrop:
                ++counters_.n_ac_dropped;
                break;
            case ClickMode::kUnbiased:
                ++counters_.n_ac;
                train(e, ac_labels_->label(e));
                break;
        }
    }

    void train(const Event& e, double label) {
        thread_local BoundEvent be;
        bind_event(model_.schema(), e, be);
        const double p = model_.sgd_update(be, label);
        counters_.label_mass += label;
        counters_.loss_sum += cross_entropy(p, label);
        ++counters_.n_trained;
    }

    ClickTrainingConfig cfg_;
    const AcLabelSource* ac_labels_;
    LatentFactorModel model_;
    ClickCounters counters_;
};

inline ClickCounters train_click(ClickTrainer& trainer, const EventSource& events) {
    events([&](const Event& e) { trainer.observe(e); });
    return trainer.counters();
}

/// The scoring snapshot served downstream: down-sampling corrected when the
/// trainer dropped skips, the model as-is when R = 1.
inline ModelSnapshot serve_snapshot(const LatentFactorModel& model, double downsample_r) {
    if (downsample_r == 1.0) return ModelSnapshot(model);
    return apply_downsampling_correction(model, downsample_r);
}

inline ModelSnapshot serve_snapshot(const ClickTrainer& trainer) {
    return serve_snapshot(trainer.model(), trainer.config().downsample_r);
}

}  // namespace acfilter
