#pragma once

#include <cstdint>
#include <stdexcept>

#include "acfilter/event_log.hpp"
#include "acfilter/model.hpp"

namespace acfilter {

enum class ClickClass : std::uint8_t { kAc, kIc, kUnknown };

/// Hindsight click classification by dwell-time: below the threshold is an
/// accidental click, at or above it an intentional one. Clicks whose
/// dwell-time was never recorded stay Unknown.
inline ClickClass classify_click(const Event& e, double tau_ac_s) {
    if (!e.clicked) throw std::invalid_argument("not a click");
    if (!e.dwell_s.has_value()) return ClickClass::kUnknown;
    return *e.dwell_s < tau_ac_s ? ClickClass::kAc : ClickClass::kIc;
}

// Down-sampling decision for a skip: keep with probability 1/R, derived from
// (seed, event_id) alone so every trainer sharing a seed keeps the same set.
inline bool keep_skip(std::uint64_t sampling_seed, std::uint64_t event_id, double downsample_r) {
    if (downsample_r <= 1.0) return true;
    return unit_from_hash(mix64(sampling_seed, event_id, 0x5C1Bu)) < 1.0 / downsample_r;
}

struct AcTrainingConfig {
    double tau_ac_s = 3.0;
    double downsample_r = 1.0;
    ModelHyper hyper = {.dim = 4};   // thin model
    FeatureSchema schema = default_ac_schema();
    std::uint64_t model_seed = 1;
    std::uint64_t sampling_seed = 1;

    void validate() const {
        if (tau_ac_s <= 0.0) throw std::invalid_argument("ac: tau_ac_s must be > 0");
        if (downsample_r < 1.0) throw std::invalid_argument("ac: downsample_r must be >= 1");
        hyper.validate();
        schema.validate();
    }
};

struct AcCounters {
    std::uint64_t n_skips_kept = 0;
    std::uint64_t n_skips_dropped = 0;
    std::uint64_t n_acs = 0;
    std::uint64_t n_ics_excluded = 0;
    std::uint64_t n_unknown_excluded = 0;
};

/// Trains the auxiliary accidental-click model: ACs are the positives, kept
/// skips the negatives. Intentional clicks are excluded outright, as are
/// clicks whose dwell-time was not recorded.
class AcTrainer {
public:
    explicit AcTrainer(AcTrainingConfig cfg)
        : cfg_(std::move(cfg)), model_(cfg_.schema, cfg_.hyper, cfg_.model_seed) {
        cfg_.validate();
    }

    AcTrainer(AcTrainingConfig cfg, LatentFactorModel seed_model)
        : cfg_(std::move(cfg)), model_(std::move(seed_model)) {
        cfg_.validate();
        require_same_digest();
    }

    void observe(const Event& e) {
        if (!e.clicked) {
            if (!keep_skip(cfg_.sampling_seed, e.event_id, cfg_.downsample_r)) {
                ++counters_.n_skips_dropped;
                return;
            }
            ++counters_.n_skips_kept;
            train(e, 0.0);
            return;
        }
        switch (classify_click(e, cfg_.tau_ac_s)) {
            case ClickClass::kAc:
                ++counters_.n_acs;
                train(e, 1.0);
                break;
            case ClickClass::kIc:
                ++counters_.n_ics_excluded;
                break;
            case ClickClass::kUnknown:
                ++counters_.n_unknown_excluded;
                break;
        }
    }

    const LatentFactorModel& model() const { return model_; }
    LatentFactorModel& model() { return model_; }
    const AcCounters& counters() const { return counters_; }
    const AcTrainingConfig& config() const { return cfg_; }

private:
    void require_same_digest() {
        if (model_.schema().digest() != cfg_.schema.digest()) {
            throw std::invalid_argument("ac: seed model schema does not match config schema");
        }
    }

    void train(const Event& e, double label) {
        thread_local BoundEvent be;
        bind_event(model_.schema(), e, be);
        model_.sgd_update(be, label);
    }

    AcTrainingConfig cfg_;
    LatentFactorModel model_;
    AcCounters counters_;
};

/// The raw model prediction, consumed as a soft label by the click trainer.
/// No down-sampling correction is applied here: when both trainers share the
/// same rate R, the uncorrected label keeps the label mass over kept skips
/// and ACs equal to the AC count.
inline double predict_ac(const LatentFactorModel& ac_model, const Event& e) {
    thread_local BoundEvent be;
    bind_event(ac_model.schema(), e, be);
    return ac_model.predict(be);
}

/// Corrected variant for absolute AC-rate reporting.
inline ModelSnapshot ac_reporting_snapshot(const LatentFactorModel& ac_model, double downsample_r) {
    if (downsample_r == 1.0) return ModelSnapshot(ac_model);
    return apply_downsampling_correction(ac_model, downsample_r);
}

inline AcCounters train_ac(AcTrainer& trainer, const EventSource& events) {
    events([&](const Event& e) { trainer.observe(e); });
    return trainer.counters();
}

}  // namespace acfilter
