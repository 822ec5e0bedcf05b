#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "acfilter/simulator.hpp"

using namespace acfilter;

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    fs::path dir = fs::temp_directory_path() / "acfilter_sim_tests";
    fs::create_directories(dir);
    return dir / name;
}

WorldConfig base_config(std::uint64_t seed = 1) {
    WorldConfig c;
    c.seed = seed;
    c.n_users = 1000;
    c.n_ads = 80;
    c.n_campaigns = 12;
    c.n_segments = 12;
    c.base_ic_rate = 0.05;
    c.ac.global_share = 0.0417;
    c.dwell.logged_traffic_share = 1.0;
    return c;
}

// Wilson-Hilferty approximation of the chi-square quantile
double chi2_quantile(double df, double z) {
    const double a = 2.0 / (9.0 * df);
    const double t = 1.0 - a + z * std::sqrt(a);
    return df * t * t * t;
}

}  // namespace

TEST_CASE("bias calibration hits the configured intentional rate", "[sim]") {
    const auto w = build_world(base_config());
    CHECK(w.mean_ic_rate > 0.0475);
    CHECK(w.mean_ic_rate < 0.0525);
}

TEST_CASE("zero-dimensional truth makes every pair equally clickable", "[sim]") {
    WorldConfig c = base_config();
    c.latent_dim_true = 0;
    const auto w = build_world(c);
    const double p = w.p_ic(0, 0);
    CHECK(p == Catch::Approx(c.base_ic_rate).epsilon(1e-6));
    for (std::uint32_t u = 0; u < 20; ++u) {
        for (std::uint32_t a = 0; a < 20; ++a) CHECK(w.p_ic(u, a) == p);
    }
}

TEST_CASE("worlds and streams are deterministic", "[sim]") {
    const auto w1 = build_world(base_config(7));
    const auto w2 = build_world(base_config(7));
    CHECK(world_to_json(w1).dump() == world_to_json(w2).dump());

    // different seed, different world
    const auto w3 = build_world(base_config(8));
    CHECK(world_to_json(w1).dump() != world_to_json(w3).dump());

    std::vector<Event> s1, s2;
    generate_events(w1, 5, 0, 2000, [&](const Event& e) { s1.push_back(e); });
    generate_events(w2, 5, 0, 2000, [&](const Event& e) { s2.push_back(e); });
    CHECK(s1 == s2);
}

TEST_CASE("stream sharding does not change events", "[sim]") {
    const auto w = build_world(base_config(9));
    std::vector<Event> whole, shards;
    generate_events(w, 3, 0, 1000, [&](const Event& e) { whole.push_back(e); });
    generate_events(w, 3, 0, 400, [&](const Event& e) { shards.push_back(e); });
    generate_events(w, 3, 400, 600, [&](const Event& e) { shards.push_back(e); });
    CHECK(whole == shards);
}

TEST_CASE("world file round-trips", "[sim]") {
    const auto w = build_world(base_config(10));
    const fs::path p1 = temp_file("w1.json");
    const fs::path p2 = temp_file("w2.json");
    save_world(w, p1);
    const auto loaded = load_world(p1);
    save_world(loaded, p2);
    std::ifstream a(p1), b(p2);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);

    // loaded world generates the identical stream
    std::vector<Event> e1, e2;
    generate_events(w, 4, 0, 500, [&](const Event& e) { e1.push_back(e); });
    generate_events(loaded, 4, 0, 500, [&](const Event& e) { e2.push_back(e); });
    CHECK(e1 == e2);
}

TEST_CASE("no accidental clicks when the share is zero", "[sim]") {
    WorldConfig c = base_config(11);
    c.ac.global_share = 0.0;
    const auto w = build_world(c);
    std::uint64_t clicks = 0;
    generate_events(w, 1, 0, 200000, [&](const Event& e) {
        if (e.clicked) {
            ++clicks;
            CHECK(e.truth == TrueOutcome::kIntentional);
            if (e.dwell_s) CHECK(*e.dwell_s >= c.dwell.tau_gen_s);
        }
    });
    CHECK(clicks > 0);
}

TEST_CASE("global AC share lands on the configured 4.17%", "[sim]") {
    const auto w = build_world(base_config(12));
    std::uint64_t clicks = 0, acs = 0;
    generate_events(w, 2, 0, 1000000, [&](const Event& e) {
        if (e.clicked) {
            ++clicks;
            if (e.dwell_s && *e.dwell_s < 3.0) ++acs;
        }
    });
    const double share = 100.0 * static_cast<double>(acs) / static_cast<double>(clicks);
    CHECK(share > 4.0);
    CHECK(share < 4.4);
}

TEST_CASE("dwell times separate cleanly at the generative threshold", "[sim]") {
    WorldConfig c = base_config(13);
    c.ac.global_share = 0.3;
    const auto w = build_world(c);
    std::uint64_t n_ac = 0, n_ic = 0;
    generate_events(w, 6, 0, 300000, [&](const Event& e) {
        if (!e.clicked || !e.dwell_s) return;
        if (e.truth == TrueOutcome::kAccidental) {
            ++n_ac;
            REQUIRE(*e.dwell_s < c.dwell.tau_gen_s);
        } else {
            ++n_ic;
            REQUIRE(*e.dwell_s >= c.dwell.tau_gen_s);
        }
    });
    CHECK(n_ac > 1000);
    CHECK(n_ic > 1000);
}

TEST_CASE("outcome frequencies converge on a fixed (user, ad, cell)", "[sim]") {
    WorldConfig c = base_config(14);
    c.n_users = 1;
    c.n_ads = 1;
    c.n_segments = 1;
    c.ac.global_share = 0.1;
    const auto w = build_world(c);
    const double p_ac = w.p_ac(0, w.users[0].involvement, w.users[0].device);
    const double p_ic_given = (1.0 - p_ac) * w.p_ic(0, 0);
    const std::uint64_t n = 400000;
    std::uint64_t acs = 0, ics = 0;
    generate_events(w, 7, 0, n, [&](const Event& e) {
        if (e.truth == TrueOutcome::kAccidental) ++acs;
        if (e.truth == TrueOutcome::kIntentional) ++ics;
    });
    const double nd = static_cast<double>(n);
    CHECK(std::abs(acs / nd - p_ac) < 3.0 * std::sqrt(p_ac * (1 - p_ac) / nd));
    CHECK(std::abs(ics / nd - p_ic_given) < 3.0 * std::sqrt(p_ic_given * (1 - p_ic_given) / nd));
}

TEST_CASE("accidental clicks are independent of the shown ad", "[sim][chi2]") {
    // Pearson chi-square over the 2 x n_ads table of (AC, not-AC) within one
    // context cell; must not reject at alpha = 0.01
    WorldConfig c = base_config(15);
    c.n_ads = 40;
    c.n_segments = 1;
    c.ac.global_share = 0.05;
    const auto w = build_world(c);

    const std::string bin = "0-10";
    const std::string dev = "dev:smartphone";
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> per_ad;  // ad -> (AC, total)
    generate_events(w, 8, 0, 1000000, [&](const Event& e) {
        const auto* invol = find_values(e.user, "user_involvement");
        const auto* tech = find_values(e.user, "tech");
        if (invol->front() != bin) return;
        bool smartphone = false;
        for (const auto& t : *tech) smartphone = smartphone || t == dev;
        if (!smartphone) return;
        auto& [ac, total] = per_ad[find_values(e.ad, "ad_id")->front()];
        ++total;
        if (e.truth == TrueOutcome::kAccidental) ++ac;
    });

    std::uint64_t total_ac = 0, total_n = 0;
    for (const auto& [_, counts] : per_ad) {
        total_ac += counts.first;
        total_n += counts.second;
    }
    REQUIRE(total_n > 10000);
    const double pooled = static_cast<double>(total_ac) / static_cast<double>(total_n);
    double chi2 = 0.0;
    for (const auto& [_, counts] : per_ad) {
        const double n_a = static_cast<double>(counts.second);
        const double e_ac = n_a * pooled;
        const double e_not = n_a * (1.0 - pooled);
        const double o_ac = static_cast<double>(counts.first);
        chi2 += (o_ac - e_ac) * (o_ac - e_ac) / e_ac;
        chi2 += ((n_a - o_ac) - e_not) * ((n_a - o_ac) - e_not) / e_not;
    }
    const double critical = chi2_quantile(static_cast<double>(per_ad.size() - 1), 2.3263478740408408);
    CHECK(chi2 < critical);
}

TEST_CASE("per-bin AC shares follow an explicit involvement profile", "[sim][table1]") {
    WorldConfig c = base_config(161);
    c.n_users = 4000;
    c.base_ic_rate = 0.18;  // enough clicks per bin for tight share estimates
    c.ac.involvement_shares = std::vector<double>{0.0637, 0.0370, 0.0337, 0.0336,
                                                  0.0276, 0.0205, 0.0174, 0.0158};
    const auto w = build_world(c);
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> per_bin;  // bin -> (AC, clicks)
    generate_events(w, 9, 0, 1000000, [&](const Event& e) {
        if (!e.clicked) return;
        auto& [ac, clicks] = per_bin[find_values(e.user, "user_involvement")->front()];
        ++clicks;
        if (e.dwell_s && *e.dwell_s < 3.0) ++ac;
    });
    for (std::size_t b = 0; b < involvement_bins().size(); ++b) {
        const auto& [ac, clicks] = per_bin.at(involvement_bins()[b]);
        const double share = 100.0 * static_cast<double>(ac) / static_cast<double>(clicks);
        const double target = 100.0 * (*c.ac.involvement_shares)[b];
        INFO("bin " << involvement_bins()[b] << " share " << share << " target " << target);
        CHECK(std::abs(share - target) < 0.3);
    }
}

TEST_CASE("world validation rejects infeasible rates", "[sim]") {
    WorldConfig c = base_config();
    c.base_ic_rate = 0.0;
    CHECK_THROWS(build_world(c));
    c = base_config();
    c.ac.global_share = 0.97;
    CHECK_THROWS(build_world(c));
    c = base_config();
    c.ac.involvement_shares = std::vector<double>{0.1, 0.2};  // wrong arity
    CHECK_THROWS(build_world(c));
    c = base_config();
    c.n_users = 0;
    CHECK_THROWS(build_world(c));
}
