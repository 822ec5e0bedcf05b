#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/click_trainer.hpp"
#include "acfilter/evaluator.hpp"
#include "acfilter/event_log.hpp"

namespace acfilter {

/// Train-then-test replay metric: every event is scored by the current model
/// before the trainer consumes it, so one pass yields an out-of-sample
/// LogLoss over the whole trajectory. Scores are down-sampling corrected on
/// the fly; labels are the raw click indicator.
class ProgressiveLogLoss {
public:
    explicit ProgressiveLogLoss(double downsample_r = 1.0, EventFilter filter = nullptr)
        : correction_(downsample_r > 1.0 ? std::log(downsample_r) : 0.0), filter_(std::move(filter)) {}

    void observe(const LatentFactorModel& model, const Event& e) {
        if (filter_ && !filter_(e)) return;
        thread_local BoundEvent be;
        bind_event(model.schema(), e, be);
        const double p = sigmoid(model.score(be) - correction_);
        const double y = e.clicked ? 1.0 : 0.0;
        stats_.n_events += 1;
        stats_.logloss_sum += logloss(p, y);
        stats_.sum_pred += p;
        stats_.sum_label += y;
    }

    const EvalStats& stats() const { return stats_; }
    double logloss_mean() const { return stats_.logloss_mean(); }

private:
    double correction_;
    EventFilter filter_;
    EvalStats stats_;
};

inline double progressive_lift(const ProgressiveLogLoss& model, const ProgressiveLogLoss& baseline) {
    const double base = baseline.logloss_mean();
    if (base == 0.0) throw std::invalid_argument("progressive_lift: baseline LogLoss is zero");
    return (1.0 - model.logloss_mean() / base) * 100.0;
}

/// Runs the two training blocks over the stream: the auxiliary AC model
/// first, then the click model consuming its predictions. With period = 0
/// the whole log is one period (two passes over the source); otherwise the
/// blocks alternate on buffered chunks of `period` events and the click
/// block always sees the AC model state as of its own period.
inline void run_unbiased_training(const EventSource& events, AcTrainer& ac, ClickTrainer& click,
                                  std::uint64_t period = 0) {
    if (period == 0) {
        events([&](const Event& e) { ac.observe(e); });
        events([&](const Event& e) { click.observe(e); });
        return;
    }
    std::vector<Event> chunk;
    chunk.reserve(period);
    auto flush = [&]() {
        for (const Event& e : chunk) ac.observe(e);
        for (const Event& e : chunk) click.observe(e);
        chunk.clear();
    };
    events([&](const Event& e) {
        chunk.push_back(e);
        if (chunk.size() >= period) flush();
    });
    flush();
}

inline nlohmann::json ac_counters_to_json(const AcCounters& c) {
    return nlohmann::json{{"n_skips_kept", c.n_skips_kept},
                          {"n_skips_dropped", c.n_skips_dropped},
                          {"n_acs", c.n_acs},
                          {"n_ics_excluded", c.n_ics_excluded},
                          {"n_unknown_excluded", c.n_unknown_excluded}};
}

inline nlohmann::json click_counters_to_json(const ClickCounters& c) {
    return nlohmann::json{{"n_ic", c.n_ic},
                          {"n_ac", c.n_ac},
                          {"n_ac_dropped", c.n_ac_dropped},
                          {"n_skips_kept", c.n_skips_kept},
                          {"n_skips_dropped", c.n_skips_dropped},
                          {"n_trained", c.n_trained},
                          {"label_mass", c.label_mass},
                          {"final_running_loss", c.mean_loss()}};
}

}  // namespace acfilter
