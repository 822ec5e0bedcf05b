#include <catch2/catch_amalgamated.hpp>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/event_log.hpp"
#include "support/test_util.hpp"

using namespace acfilter;
using namespace acfilter::testutil;

namespace {

// minimal event carrying the default AC feature set
Event ac_event(std::uint64_t id, bool clicked, std::optional<double> dwell, bool dwell_logged,
               const std::string& segment = "site0:p1", const std::string& bin = "0-10") {
    Event e;
    e.event_id = id;
    e.segment = segment;
    e.user = {{"user_involvement", {bin}}, {"tech", {"dev:smartphone", "os:ios"}}};
    e.ad = {{"ad_id", {"a1"}}};
    e.clicked = clicked;
    e.dwell_logged = dwell_logged;
    e.dwell_s = dwell;
    return e;
}

AcTrainingConfig quick_config(double tau = 3.0, double r = 1.0) {
    AcTrainingConfig cfg;
    cfg.tau_ac_s = tau;
    cfg.downsample_r = r;
    cfg.hyper.l2_lambda = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("classify_click thresholds dwell-time", "[ac]") {
    CHECK(classify_click(ac_event(1, true, 1.2, true), 3.0) == ClickClass::kAc);
    CHECK(classify_click(ac_event(2, true, 3.0, true), 3.0) == ClickClass::kIc);  // boundary is IC
    CHECK(classify_click(ac_event(3, true, 2.999, true), 3.0) == ClickClass::kAc);
    CHECK(classify_click(ac_event(4, true, std::nullopt, false), 3.0) == ClickClass::kUnknown);
    CHECK(classify_click(ac_event(5, true, std::nullopt, true), 3.0) == ClickClass::kUnknown);
    CHECK_THROWS_WITH(classify_click(ac_event(6, false, std::nullopt, false), 3.0), "not a click");
}

TEST_CASE("ac trainer counters partition the stream", "[ac]") {
    AcTrainer trainer(quick_config());
    std::uint64_t id = 0;
    for (int i = 0; i < 100; ++i) trainer.observe(ac_event(id++, false, std::nullopt, false));
    for (int i = 0; i < 5; ++i) trainer.observe(ac_event(id++, true, 1.0, true));
    for (int i = 0; i < 10; ++i) trainer.observe(ac_event(id++, true, 10.0, true));
    CHECK(trainer.counters().n_skips_kept == 100);
    CHECK(trainer.counters().n_acs == 5);
    CHECK(trainer.counters().n_ics_excluded == 10);
    CHECK(trainer.counters().n_unknown_excluded == 0);
}

TEST_CASE("intentional clicks never touch the AC model", "[ac]") {
    AcTrainer trainer(quick_config());
    for (int i = 0; i < 50; ++i) {
        trainer.observe(ac_event(i, i % 3 == 0, i % 3 == 0 ? std::optional<double>(1.0) : std::nullopt,
                                 i % 3 == 0));
    }
    const std::uint64_t before = trainer.model().checksum();
    for (int i = 0; i < 20; ++i) {
        trainer.observe(ac_event(1000 + i, true, 30.0 + i, true));  // all IC
        trainer.observe(ac_event(2000 + i, true, std::nullopt, false));  // unknown dwell
    }
    CHECK(trainer.model().checksum() == before);
    CHECK(trainer.counters().n_ics_excluded == 20);
    CHECK(trainer.counters().n_unknown_excluded == 20);
}

TEST_CASE("skip down-sampling keeps ~1/R and is seed-deterministic", "[ac]") {
    AcTrainingConfig cfg = quick_config(3.0, 10.0);
    AcTrainer t1(cfg), t2(cfg);
    for (int i = 0; i < 20000; ++i) {
        const Event e = ac_event(i, false, std::nullopt, false);
        t1.observe(e);
        t2.observe(e);
    }
    CHECK(t1.counters().n_skips_kept == t2.counters().n_skips_kept);
    CHECK(t1.counters().n_skips_kept ==
          Catch::Approx(2000).margin(3 * std::sqrt(20000 * 0.1 * 0.9)));
    CHECK(t1.model().checksum() == t2.model().checksum());
}

TEST_CASE("AC model mean-matches the accidental share of its stream", "[ac][bregman]") {
    // Bernoulli AC share q among kept events; the paper's global figure
    const double q = 0.0417;
    AcTrainingConfig cfg = quick_config();
    AcTrainer trainer(cfg);
    SplitMix64 rng(1234);
    for (int i = 0; i < 1000000; ++i) {
        if (rng.uniform() < q) {
            trainer.observe(ac_event(i, true, 0.5, true));
        } else {
            trainer.observe(ac_event(i, false, std::nullopt, true));
        }
    }
    const Event probe = ac_event(0, false, std::nullopt, true);
    const double p = predict_ac(trainer.model(), probe);
    CHECK(p == Catch::Approx(q).epsilon(0.02));
}

TEST_CASE("skips-only stream drives the prediction toward zero", "[ac]") {
    AcTrainer trainer(quick_config());
    for (int i = 0; i < 50000; ++i) trainer.observe(ac_event(i, false, std::nullopt, false));
    const Event probe = ac_event(0, false, std::nullopt, false);
    CHECK(predict_ac(trainer.model(), probe) < 0.01);
}

TEST_CASE("the AC prediction ignores ad identity", "[ac]") {
    AcTrainer trainer(quick_config());
    SplitMix64 rng(9);
    for (int i = 0; i < 5000; ++i) {
        trainer.observe(ac_event(i, rng.uniform() < 0.1, rng.uniform() < 0.1 ? std::optional<double>(1.0)
                                                                             : std::nullopt,
                                 true));
    }
    Event a = ac_event(1, false, std::nullopt, true);
    Event b = a;
    b.ad = {{"ad_id", {"a999"}}, {"campaign", {"c7"}}};
    CHECK(predict_ac(trainer.model(), a) == predict_ac(trainer.model(), b));
}

TEST_CASE("self-calibration: label mass over kept negatives equals the AC count", "[ac][bregman]") {
    // sum of predictions over kept skips + ACs on a replay of the training
    // stream ~ |T_ac|, here with down-sampling in play
    AcTrainingConfig cfg = quick_config(3.0, 5.0);
    cfg.sampling_seed = 77;
    AcTrainer trainer(cfg);
    SplitMix64 rng(555);
    std::vector<Event> stream;
    for (int i = 0; i < 400000; ++i) {
        const double u = rng.uniform();
        // three context cells with different AC propensity
        const std::string seg = "site" + std::to_string(i % 3) + ":p1";
        const std::string bin = i % 2 ? "0-10" : "101-200";
        const double p_ac = (i % 3 == 0 ? 0.02 : (i % 3 == 1 ? 0.06 : 0.12)) * (i % 2 ? 1.5 : 0.7);
        if (u < p_ac) {
            stream.push_back(ac_event(i, true, 1.0, true, seg, bin));
        } else if (u < p_ac + 0.04) {
            stream.push_back(ac_event(i, true, 8.0, true, seg, bin));  // IC, excluded
        } else {
            stream.push_back(ac_event(i, false, std::nullopt, true, seg, bin));
        }
    }
    for (const auto& e : stream) trainer.observe(e);

    double label_sum = 0.0;
    std::uint64_t n_ac = 0;
    for (const auto& e : stream) {
        if (e.clicked) {
            if (classify_click(e, cfg.tau_ac_s) == ClickClass::kAc) {
                label_sum += predict_ac(trainer.model(), e);
                ++n_ac;
            }
        } else if (keep_skip(cfg.sampling_seed, e.event_id, cfg.downsample_r)) {
            label_sum += predict_ac(trainer.model(), e);
        }
    }
    CHECK(label_sum == Catch::Approx(static_cast<double>(n_ac)).epsilon(0.03));
}

TEST_CASE("empty stream leaves the model untouched", "[ac]") {
    AcTrainer trainer(quick_config());
    const std::uint64_t before = trainer.model().checksum();
    train_ac(trainer, vector_event_source({}));
    CHECK(trainer.model().checksum() == before);
    CHECK(trainer.counters().n_skips_kept == 0);
}

TEST_CASE("corrected reporting snapshot undoes down-sampling inflation", "[ac]") {
    const double q = 0.03, R = 8.0;
    AcTrainingConfig cfg = quick_config(3.0, R);
    AcTrainer trainer(cfg);
    SplitMix64 rng(31);
    for (int i = 0; i < 1000000; ++i) {
        if (rng.uniform() < q) {
            trainer.observe(ac_event(i, true, 1.0, true));
        } else {
            trainer.observe(ac_event(i, false, std::nullopt, true));
        }
    }
    const ModelSnapshot corrected = ac_reporting_snapshot(trainer.model(), R);
    const Event probe = ac_event(0, false, std::nullopt, true);
    CHECK(corrected.predict_event(probe) == Catch::Approx(q).epsilon(0.05));
    // the raw label stays on the kept-stream scale
    const double kept_rate = q / (q + (1.0 - q) / R);
    CHECK(predict_ac(trainer.model(), probe) == Catch::Approx(kept_rate).epsilon(0.05));
}

TEST_CASE("config validation", "[ac]") {
    AcTrainingConfig cfg = quick_config();
    cfg.tau_ac_s = 0.0;
    CHECK_THROWS(AcTrainer{cfg});
    cfg = quick_config();
    cfg.downsample_r = 0.5;
    CHECK_THROWS(AcTrainer{cfg});
}
