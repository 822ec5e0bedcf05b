#include <catch2/catch_amalgamated.hpp>

#include "acfilter/click_trainer.hpp"
#include "acfilter/serving_sim.hpp"
#include "acfilter/simulator.hpp"

using namespace acfilter;

namespace {

WorldConfig serve_world_config(std::uint64_t seed) {
    WorldConfig c;
    c.seed = seed;
    c.n_users = 800;
    c.n_ads = 100;
    c.n_campaigns = 15;
    c.n_segments = 9;
    c.base_ic_rate = 0.05;
    c.ac.global_share = 0.15;
    c.ac.segment_jitter = 0.4;
    c.dwell.logged_traffic_share = 1.0;
    c.bids.lognormal_sigma = 0.6;
    return c;
}

}  // namespace

TEST_CASE("identical snapshots realize identical revenue", "[serve]") {
    const auto w = build_world(serve_world_config(1));
    GroundTruthScorer oracle(w);
    ServeConfig cfg;
    cfg.n_auctions = 20000;
    const auto report = simulate_serving(w, {{"a", &oracle}, {"b", &oracle}}, cfg);
    REQUIRE(report.modes.size() == 2);
    CHECK(report.modes[0].revenue == report.modes[1].revenue);
    CHECK(report.modes[0].expected_revenue == report.modes[1].expected_revenue);
    CHECK(report.modes[0].n_clicks == report.modes[1].n_clicks);
    for (const auto& lift : report.lifts) CHECK(lift.cpm_lift_pct == 0.0);
}

TEST_CASE("argmax ranking is invariant to a uniform positive scaling", "[serve]") {
    const auto w = build_world(serve_world_config(2));
    GroundTruthScorer oracle(w);
    ScaledScorer halved(oracle, 0.5);
    ServeConfig cfg;
    cfg.n_auctions = 20000;
    const auto report = simulate_serving(w, {{"full", &oracle}, {"half", &halved}}, cfg);
    // same choices per auction: realized revenue and click counts coincide
    CHECK(report.modes[0].revenue == report.modes[1].revenue);
    CHECK(report.modes[0].n_clicks == report.modes[1].n_clicks);
    CHECK(report.modes[0].expected_revenue == report.modes[1].expected_revenue);
}

TEST_CASE("the ground-truth snapshot dominates trained ones in expectation", "[serve][oracle]") {
    // expected revenue is maximized per auction by ranking on bid x true CTR
    int oracle_wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto w = build_world(serve_world_config(seed));
        ClickTrainingConfig cfg;
        cfg.mode = ClickMode::kAgnostic;
        cfg.hyper.dim = 8;
        ClickTrainer trainer(cfg);
        generate_events(w, 100 + seed, 0, 150000, [&](const Event& e) { trainer.observe(e); });
        const ModelSnapshot trained = serve_snapshot(trainer);
        GroundTruthScorer oracle(w);

        ServeConfig scfg;
        scfg.n_auctions = 20000;
        scfg.seed = seed;
        const auto report = simulate_serving(w, {{"oracle", &oracle}, {"trained", &trained}}, scfg);
        REQUIRE(report.modes[0].mode == "oracle");
        CHECK(report.modes[0].expected_revenue >= report.modes[1].expected_revenue);
        oracle_wins += report.modes[0].expected_revenue >= report.modes[1].expected_revenue;
    }
    CHECK(oracle_wins == 5);
}

TEST_CASE("serving rejects an empty snapshot map", "[serve]") {
    const auto w = build_world(serve_world_config(3));
    CHECK_THROWS_WITH(simulate_serving(w, {}, ServeConfig{}),
                      Catch::Matchers::ContainsSubstring("no snapshots"));
}

TEST_CASE("single snapshot reports no lifts", "[serve]") {
    const auto w = build_world(serve_world_config(4));
    GroundTruthScorer oracle(w);
    ServeConfig cfg;
    cfg.n_auctions = 1000;
    const auto report = simulate_serving(w, {{"only", &oracle}}, cfg);
    CHECK(report.modes.size() == 1);
    CHECK(report.lifts.empty());
    CHECK(report.modes[0].cpm == Catch::Approx(report.modes[0].revenue));
}

TEST_CASE("serve report serialization", "[serve]") {
    const auto w = build_world(serve_world_config(5));
    GroundTruthScorer oracle(w);
    ScaledScorer weak(oracle, 0.2);
    ServeConfig cfg;
    cfg.n_auctions = 5000;
    const auto report = simulate_serving(w, {{"oracle", &oracle}, {"weak", &weak}}, cfg);
    const auto j = serve_report_to_json(report);
    CHECK(j["modes"].contains("oracle"));
    CHECK(j["lifts"].size() == 2);
    const std::string csv = serve_report_to_csv(report);
    CHECK(csv.find("oracle") != std::string::npos);
    CHECK(csv.find("mode,n_auctions") == 0);
}
