#include <catch2/catch_amalgamated.hpp>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/click_trainer.hpp"
#include "acfilter/evaluator.hpp"
#include "acfilter/simulator.hpp"
#include "support/test_util.hpp"

using namespace acfilter;
using namespace acfilter::testutil;

namespace {

struct ConstLabelSource final : AcLabelSource {
    double value;
    explicit ConstLabelSource(double v) : value(v) {}
    double label(const Event&) const override { return value; }
};

ClickTrainingConfig quick_config(ClickMode mode, double r = 1.0) {
    ClickTrainingConfig cfg;
    cfg.mode = mode;
    cfg.downsample_r = r;
    cfg.hyper.dim = 4;
    cfg.hyper.l2_lambda = 0.0;
    return cfg;
}

WorldConfig small_world(double ac_share, std::uint64_t seed) {
    WorldConfig wc;
    wc.seed = seed;
    wc.n_users = 500;
    wc.n_ads = 60;
    wc.n_campaigns = 10;
    wc.n_segments = 9;
    wc.base_ic_rate = 0.06;
    wc.ac.global_share = ac_share;
    wc.dwell.logged_traffic_share = 1.0;  // fully instrumented
    return wc;
}

}  // namespace

TEST_CASE("mode/label-source pairing is validated", "[click]") {
    CHECK_THROWS_WITH(ClickTrainer(quick_config(ClickMode::kUnbiased)),
                      Catch::Matchers::ContainsSubstring("requires an AC model"));
    ConstLabelSource zero(0.0);
    CHECK_THROWS_WITH(ClickTrainer(quick_config(ClickMode::kAgnostic), &zero),
                      Catch::Matchers::ContainsSubstring("must not reference"));
    CHECK_NOTHROW(ClickTrainer(quick_config(ClickMode::kUnbiased), &zero));
}

TEST_CASE("unbiased with an all-zero AC model degenerates to filtered", "[click]") {
    auto world = build_world(small_world(0.15, 3));
    ConstLabelSource zero(0.0);
    ClickTrainer filtered(quick_config(ClickMode::kFiltered));
    ClickTrainer unbiased(quick_config(ClickMode::kUnbiased), &zero);
    generate_events(world, 1, 0, 20000, [&](const Event& e) {
        filtered.observe(e);
        unbiased.observe(e);
    });
    CHECK(filtered.model().checksum() == unbiased.model().checksum());
    CHECK(filtered.counters().n_ac == unbiased.counters().n_ac);
    CHECK(filtered.counters().label_mass == unbiased.counters().label_mass);
}

TEST_CASE("counters partition trained events in every mode", "[click]") {
    auto world = build_world(small_world(0.2, 4));
    for (ClickMode mode : {ClickMode::kAgnostic, ClickMode::kFiltered, ClickMode::kFilteredDrop,
                           ClickMode::kUnbiased}) {
        ConstLabelSource half(0.5);
        ClickTrainer t(quick_config(mode, 4.0),
                       mode == ClickMode::kUnbiased ? &half : nullptr);
        std::uint64_t n_events = 0;
        generate_events(world, 2, 0, 30000, [&](const Event& e) {
            ++n_events;
            t.observe(e);
        });
        const auto& c = t.counters();
        CHECK(c.n_ic + c.n_ac + c.n_skips_kept == c.n_trained);
        CHECK(c.n_trained + c.n_skips_dropped + c.n_ac_dropped == n_events);
        if (mode == ClickMode::kFilteredDrop) {
            CHECK(c.n_ac == 0);
            CHECK(c.n_ac_dropped > 0);
        } else {
            CHECK(c.n_ac_dropped == 0);
        }
    }
}

TEST_CASE("ACs are never down-sampled in unbiased mode", "[click]") {
    auto world = build_world(small_world(0.25, 5));
    ConstLabelSource half(0.1);
    ClickTrainer t(quick_config(ClickMode::kUnbiased, 10.0), &half);
    std::uint64_t stream_acs = 0;
    generate_events(world, 3, 0, 50000, [&](const Event& e) {
        if (e.clicked && classify_click(e, 3.0) == ClickClass::kAc) ++stream_acs;
        t.observe(e);
    });
    CHECK(t.counters().n_ac == stream_acs);
    CHECK(stream_acs > 0);
}

TEST_CASE("all modes share skip sampling decisions", "[click]") {
    auto world = build_world(small_world(0.2, 6));
    ConstLabelSource half(0.5);
    ClickTrainingConfig base = quick_config(ClickMode::kAgnostic, 7.0);
    ClickTrainer agnostic(base);
    ClickTrainingConfig fcfg = base;
    fcfg.mode = ClickMode::kFiltered;
    ClickTrainer filtered(fcfg);
    ClickTrainingConfig ucfg = base;
    ucfg.mode = ClickMode::kUnbiased;
    ClickTrainer unbiased(ucfg, &half);
    generate_events(world, 4, 0, 30000, [&](const Event& e) {
        agnostic.observe(e);
        filtered.observe(e);
        unbiased.observe(e);
    });
    CHECK(agnostic.counters().n_skips_kept == filtered.counters().n_skips_kept);
    CHECK(agnostic.counters().n_skips_kept == unbiased.counters().n_skips_kept);
}

TEST_CASE("binary-label cross-entropy training equals a plain logloss trainer", "[click][oracle]") {
    // independent oracle: a hand-rolled logloss SGD/AdaGrad on the same
    // parameters must produce the identical trajectory at binary labels
    const FeatureSchema schema = tiny_schema();
    ModelHyper h;
    h.dim = 3;
    h.l2_lambda = 0.0;
    LatentFactorModel impl(schema, h, 17);

    struct Param {
        std::vector<double> v, g2;
    };
    std::map<std::string, Param> oracle_u, oracle_a;
    double oracle_b = 0.0, oracle_bg2 = 0.0;
    auto oracle_vec = [&](std::map<std::string, Param>& side, std::uint32_t field, const std::string& key) {
        auto it = side.find(key);
        if (it == side.end()) {
            Param p;
            detail::init_vector(17, field, key, h.dim, h.init_sigma, p.v);
            p.g2.assign(h.dim, 0.0);
            it = side.emplace(key, std::move(p)).first;
        }
        return it;
    };

    SplitMix64 rng(88);
    for (int i = 0; i < 3000; ++i) {
        const std::string uv = "u" + std::to_string(rng.below(7));
        const std::string av = "a" + std::to_string(rng.below(7));
        const double y = rng.uniform() < 0.3 ? 1.0 : 0.0;
        Event e;
        e.segment = "s";
        e.user = {{"u", {uv}}};
        e.ad = {{"a", {av}}};
        impl.sgd_update(bind_event(schema, e), y);

        auto& pu = oracle_vec(oracle_u, 0, uv)->second;
        auto& pa = oracle_vec(oracle_a, 1, av)->second;
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) dot += pu.v[c] * pa.v[c];
        const double p = sigmoid(oracle_b + dot);
        const double g = p - y;  // d(logloss)/d(score)
        oracle_bg2 += g * g;
        oracle_b -= h.step_size * g / std::sqrt(oracle_bg2 + h.adagrad_epsilon);
        std::vector<double> pu_old = pu.v;
        for (int c = 0; c < 3; ++c) {
            const double gu = g * pa.v[c];
            pu.g2[c] += gu * gu;
            pu.v[c] -= h.step_size * gu / std::sqrt(pu.g2[c] + h.adagrad_epsilon);
        }
        for (int c = 0; c < 3; ++c) {
            const double ga = g * pu_old[c];
            pa.g2[c] += ga * ga;
            pa.v[c] -= h.step_size * ga / std::sqrt(pa.g2[c] + h.adagrad_epsilon);
        }
    }

    CHECK(impl.bias() == oracle_b);
    for (const auto& [key, p] : oracle_u) {
        const auto* v = impl.find_vector(0, key);
        REQUIRE(v != nullptr);
        for (int c = 0; c < 3; ++c) REQUIRE((*v)[c] == p.v[c]);
    }
    for (const auto& [key, p] : oracle_a) {
        const auto* v = impl.find_vector(1, key);
        REQUIRE(v != nullptr);
        for (int c = 0; c < 3; ++c) REQUIRE((*v)[c] == p.v[c]);
    }
}

TEST_CASE("label mass adds IC count and AC-model mass", "[click][bregman]") {
    auto world = build_world(small_world(0.2, 8));
    AcTrainingConfig ac_cfg;
    ac_cfg.hyper.l2_lambda = 0.0;
    AcTrainer ac(ac_cfg);
    const std::uint64_t n = 300000;
    generate_events(world, 5, 0, n, [&](const Event& e) { ac.observe(e); });

    AcModelLabelSource labels(ac.model());
    ClickTrainer t(quick_config(ClickMode::kUnbiased), &labels);
    std::uint64_t n_ic = 0, n_ac = 0;
    generate_events(world, 5, 0, n, [&](const Event& e) {
        if (e.clicked) {
            (classify_click(e, 3.0) == ClickClass::kAc ? n_ac : n_ic) += 1;
        }
        t.observe(e);
    });
    CHECK(t.counters().label_mass ==
          Catch::Approx(static_cast<double>(n_ic) + static_cast<double>(n_ac)).epsilon(0.03));
}

TEST_CASE("serve_snapshot applies the correction only when needed", "[click]") {
    LatentFactorModel m(tiny_schema(), ModelHyper{.dim = 2}, 1);
    m.set_bias(1.0);
    CHECK(serve_snapshot(m, 1.0).bias() == 1.0);
    CHECK(serve_snapshot(m, 10.0).bias() == Catch::Approx(-1.3025850929940457).epsilon(1e-14));
    CHECK_THROWS(serve_snapshot(m, 0.99));
}

TEST_CASE("snapshots ignore later training", "[click]") {
    auto world = build_world(small_world(0.1, 9));
    ClickTrainer t(quick_config(ClickMode::kAgnostic));
    generate_events(world, 6, 0, 5000, [&](const Event& e) { t.observe(e); });
    const ModelSnapshot snap = serve_snapshot(t);
    const Event probe = generate_event(world, 7, 0);
    const double before = snap.predict_event(probe);
    generate_events(world, 6, 5000, 5000, [&](const Event& e) { t.observe(e); });
    CHECK(snap.predict_event(probe) == before);
    CHECK(serve_snapshot(t).predict_event(probe) != before);
}

TEST_CASE("agnostic and unbiased coincide on an AC-free world", "[click][oracle]") {
    // with no accidental clicks and a near-zero AC model the two modes match
    // up to the tiny soft labels
    WorldConfig wc = small_world(0.0, 10);
    auto world = build_world(wc);
    auto shared = std::make_shared<GroundTruthWorld>(world);

    AcTrainingConfig ac_cfg;
    ac_cfg.hyper.l2_lambda = 0.0;
    AcTrainer ac(ac_cfg);
    const std::uint64_t n = 200000;
    generate_events(world, 11, 0, n, [&](const Event& e) { ac.observe(e); });

    ClickTrainer agnostic(quick_config(ClickMode::kAgnostic));
    AcModelLabelSource labels(ac.model());
    ClickTrainer unbiased(quick_config(ClickMode::kUnbiased), &labels);
    generate_events(world, 11, 0, n, [&](const Event& e) {
        agnostic.observe(e);
        unbiased.observe(e);
    });

    const EventSource holdout = world_event_source(shared, 12, 50000);
    const EvalReport ra = evaluate(serve_snapshot(agnostic), holdout, nullptr, false);
    const EvalReport ru = evaluate(serve_snapshot(unbiased), holdout, nullptr, false);
    CHECK(ra.logloss_mean() == Catch::Approx(ru.logloss_mean()).epsilon(0.001));
}
