#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acfilter/hash.hpp"
#include "acfilter/simulator.hpp"

namespace acfilter {

struct ServeConfig {
    std::uint64_t n_auctions = 100000;
    std::uint32_t candidate_k = 20;
    std::uint64_t seed = 1;
};

struct ModeRevenue {
    std::string mode;
    double revenue = 0.0;           // realized CPC revenue (bids of clicked winners)
    double cpm = 0.0;               // revenue per 1000 auctions
    double expected_revenue = 0.0;  // sum of bid * true CTR of the winner
    double expected_cpm = 0.0;
    std::uint64_t n_clicks = 0;
};

struct RevenueLift {
    std::string mode;
    std::string baseline;
    double cpm_lift_pct = 0.0;       // (CPM_mode / CPM_baseline - 1) * 100
    double expected_lift_pct = 0.0;
};

struct ServeReport {
    std::uint64_t n_auctions = 0;
    std::uint32_t candidate_k = 0;
    std::vector<ModeRevenue> modes;
    std::vector<RevenueLift> lifts;  // all ordered pairs
};

/// Rank-by-score auction replay: every mode independently picks
/// argmax bid(a) * pCTR_mode(u, a) from the same candidate slate, and the
/// winner's outcome is drawn from ground truth with one uniform per auction
/// (identical snapshots therefore realize identical revenue). Advertisers
/// are billed per click, accidental or not.
inline ServeReport simulate_serving(const GroundTruthWorld& world,
                                    const std::vector<std::pair<std::string, const Scorer*>>& snapshots,
                                    const ServeConfig& cfg) {
    if (snapshots.empty()) throw std::invalid_argument("simulate_serving: no snapshots given");
    if (cfg.candidate_k < 1) throw std::invalid_argument("simulate_serving: candidate_k must be >= 1");
    const std::uint32_t k = std::min<std::uint32_t>(cfg.candidate_k, world.config.n_ads);

    ServeReport report;
    report.n_auctions = cfg.n_auctions;
    report.candidate_k = k;
    for (const auto& [name, _] : snapshots) {
        report.modes.push_back(ModeRevenue{name});
    }

    std::vector<std::uint32_t> candidates;
    std::vector<Event> probes(k);
    for (std::uint64_t auction = 0; auction < cfg.n_auctions; ++auction) {
        SplitMix64 rng(mix64(world.config.seed, cfg.seed, auction, 0xB1DDu));
        const auto user = static_cast<std::uint32_t>(rng.below(world.config.n_users));
        const std::uint32_t segment = world.sample_segment(rng.uniform());

        candidates.clear();
        while (candidates.size() < k) {
            const auto ad = static_cast<std::uint32_t>(rng.below(world.config.n_ads));
            bool dup = false;
            for (std::uint32_t c : candidates) dup = dup || c == ad;
            if (!dup) candidates.push_back(ad);
        }
        for (std::uint32_t i = 0; i < k; ++i) {
            probes[i] = Event{};
            probes[i].event_id = auction * k + i;
            detail_world::fill_event_features(world, user, candidates[i], segment, probes[i]);
        }

        const double u_outcome = rng.uniform();
        for (std::size_t m = 0; m < snapshots.size(); ++m) {
            const Scorer& scorer = *snapshots[m].second;
            std::uint32_t best = 0;
            double best_value = -1.0;
            for (std::uint32_t i = 0; i < k; ++i) {
                const double value = world.ads[candidates[i]].bid * scorer.predict_event(probes[i]);
                if (value > best_value) {
                    best_value = value;
                    best = i;
                }
            }
            const std::uint32_t winner = candidates[best];
            const double true_ctr = world.total_ctr(user, winner, segment);
            ModeRevenue& mr = report.modes[m];
            mr.expected_revenue += world.ads[winner].bid * true_ctr;
            if (u_outcome < true_ctr) {
                mr.revenue += world.ads[winner].bid;
                ++mr.n_clicks;
            }
        }
    }

    const double per_mille = cfg.n_auctions > 0 ? 1000.0 / static_cast<double>(cfg.n_auctions) : 0.0;
    for (auto& mr : report.modes) {
        mr.cpm = mr.revenue * per_mille;
        mr.expected_cpm = mr.expected_revenue * per_mille;
    }
    for (const auto& a : report.modes) {
        for (const auto& b : report.modes) {
            if (a.mode == b.mode) continue;
            RevenueLift lift;
            lift.mode = a.mode;
            lift.baseline = b.mode;
            lift.cpm_lift_pct = b.cpm > 0.0 ? (a.cpm / b.cpm - 1.0) * 100.0 : 0.0;
            lift.expected_lift_pct =
                b.expected_cpm > 0.0 ? (a.expected_cpm / b.expected_cpm - 1.0) * 100.0 : 0.0;
            report.lifts.push_back(std::move(lift));
        }
    }
    return report;
}

inline nlohmann::json serve_report_to_json(const ServeReport& r) {
    nlohmann::json j;
    j["n_auctions"] = r.n_auctions;
    j["candidate_k"] = r.candidate_k;
    for (const auto& m : r.modes) {
        j["modes"][m.mode] = {{"revenue", m.revenue},
                              {"cpm", m.cpm},
                              {"expected_revenue", m.expected_revenue},
                              {"expected_cpm", m.expected_cpm},
                              {"n_clicks", m.n_clicks}};
    }
    for (const auto& l : r.lifts) {
        j["lifts"].push_back({{"mode", l.mode},
                              {"baseline", l.baseline},
                              {"cpm_lift_pct", l.cpm_lift_pct},
                              {"expected_cpm_lift_pct", l.expected_lift_pct}});
    }
    return j;
}

inline std::string serve_report_to_csv(const ServeReport& r) {
    std::string csv = "mode,n_auctions,n_clicks,revenue,cpm,expected_revenue,expected_cpm\n";
    for (const auto& m : r.modes) {
        csv += m.mode + "," + std::to_string(r.n_auctions) + "," + std::to_string(m.n_clicks) + "," +
               std::to_string(m.revenue) + "," + std::to_string(m.cpm) + "," +
               std::to_string(m.expected_revenue) + "," + std::to_string(m.expected_cpm) + "\n";
    }
    return csv;
}

}  // namespace acfilter
