#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "acfilter/event_log.hpp"
#include "acfilter/hash.hpp"
#include "acfilter/math.hpp"
#include "acfilter/model.hpp"
#include "acfilter/schema.hpp"

namespace acfilter {

// User involvement bins (ad views over the trailing month).
inline const std::vector<std::string>& involvement_bins() {
    static const std::vector<std::string> bins = {"0-10",    "11-20",    "21-50",     "51-100",
                                                  "101-200", "201-500",  "501-1000",  "1001-5000"};
    return bins;
}

inline const std::vector<std::string>& device_types() {
    static const std::vector<std::string> d = {"smartphone", "tablet", "desktop"};
    return d;
}

namespace worlddef {
inline const std::vector<std::string>& os_types() {
    static const std::vector<std::string> v = {"ios", "android", "windows", "macos"};
    return v;
}
inline const std::vector<std::string>& browsers() {
    static const std::vector<std::string> v = {"chrome", "safari", "firefox", "edge"};
    return v;
}
inline const std::vector<std::string>& demo_cells() {
    static const std::vector<std::string> v = {"f:18-24", "f:25-34", "f:35-54", "f:55plus",
                                               "m:18-24", "m:25-34", "m:35-54", "m:55plus",
                                               "x:18-24", "x:25-34", "x:35-54", "x:55plus"};
    return v;
}
inline constexpr std::array<double, 3> kDeviceProbs = {0.55, 0.15, 0.30};
inline constexpr std::array<double, 4> kOsProbs = {0.35, 0.35, 0.20, 0.10};
inline constexpr std::array<double, 4> kBrowserProbs = {0.50, 0.30, 0.10, 0.10};
}  // namespace worlddef

struct AcRateConfig {
    // Target share of clicks that are accidental, per involvement bin when
    // given explicitly, otherwise global_share everywhere. Device multipliers
    // and per-segment jitter shape the cell structure; per-bin click-weighted
    // means are renormalized back to the targets.
    double global_share = 0.0417;
    std::optional<std::vector<double>> involvement_shares;  // size 8 when present
    std::map<std::string, double> device_multipliers;
    double segment_jitter = 0.0;
};

struct DwellGenConfig {
    double logged_traffic_share = 0.13;  // share of impressions on dwell-logged segments
    double tau_gen_s = 3.0;              // generative AC/IC boundary
    double ic_lognormal_mu = 2.0;
    double ic_lognormal_sigma = 1.0;
    double blur_s = 0.0;                 // > 0 lets the two dwell supports overlap
};

struct BidConfig {
    double lognormal_mu = 0.0;
    double lognormal_sigma = 0.5;
};

struct WorldConfig {
    std::uint64_t seed = 1;
    std::uint32_t n_users = 4000;
    std::uint32_t n_ads = 300;
    std::uint32_t n_campaigns = 40;
    std::uint32_t n_categories = 12;
    std::uint32_t n_segments = 24;
    std::uint32_t latent_dim_true = 8;
    double true_score_sigma = 0.75;  // target std of the true score's interaction term
    double base_ic_rate = 0.05;      // mean intentional CTR the bias is calibrated to
    AcRateConfig ac;
    DwellGenConfig dwell;
    BidConfig bids;

    void validate() const {
        if (n_users < 1 || n_ads < 1 || n_segments < 1 || n_campaigns < 1 || n_categories < 1) {
            throw std::invalid_argument("world: entity counts must be >= 1");
        }
        if (!(base_ic_rate > 0.0) || base_ic_rate >= 0.95) {
            throw std::invalid_argument("world: base_ic_rate must be in (0, 0.95)");
        }
        auto check_share = [](double s) {
            if (s < 0.0 || s >= 0.95) throw std::invalid_argument("world: AC share must be in [0, 0.95)");
        };
        check_share(ac.global_share);
        if (ac.involvement_shares) {
            if (ac.involvement_shares->size() != involvement_bins().size()) {
                throw std::invalid_argument("world: involvement_shares needs one value per bin");
            }
            for (double s : *ac.involvement_shares) check_share(s);
        }
        for (const auto& [name, m] : ac.device_multipliers) {
            if (m < 0.0) throw std::invalid_argument("world: negative device multiplier for " + name);
        }
        if (ac.segment_jitter < 0.0) throw std::invalid_argument("world: segment_jitter must be >= 0");
        if (dwell.logged_traffic_share < 0.0 || dwell.logged_traffic_share > 1.0) {
            throw std::invalid_argument("world: logged_traffic_share must be in [0, 1]");
        }
        if (dwell.tau_gen_s <= 0.0) throw std::invalid_argument("world: tau_gen_s must be > 0");
        if (dwell.ic_lognormal_sigma < 0.0 || dwell.blur_s < 0.0 || bids.lognormal_sigma < 0.0) {
            throw std::invalid_argument("world: distribution sigmas must be >= 0");
        }
        if (true_score_sigma < 0.0) throw std::invalid_argument("world: true_score_sigma must be >= 0");
    }
};

struct UserProfile {
    std::uint32_t involvement = 0;  // bin index
    std::uint32_t demo = 0;
    std::uint32_t device = 0;
    std::uint32_t os = 0;
    std::uint32_t browser = 0;
    std::vector<double> vec;  // assembled true latent vector
};

struct AdProfile {
    std::uint32_t campaign = 0;
    std::uint32_t category = 0;
    double bid = 1.0;
    std::vector<double> vec;
};

struct SegmentInfo {
    std::string name;
    double weight = 1.0;  // impression share, normalized
    bool dwell_logged = false;
};

/// Fully materialized synthetic marketplace: the true intentional-click
/// model, per-cell accidental-click rates, dwell-time laws and bids. A
/// deterministic function of its WorldConfig.
struct GroundTruthWorld {
    WorldConfig config;
    double bias_star = 0.0;   // calibrated so mean sigma(b* + u.a) ~ base_ic_rate
    double vec_scale = 1.0;   // applied to raw value vectors
    double mean_ic_rate = 0.0;

    std::vector<SegmentInfo> segments;
    std::vector<double> segment_cdf;
    std::vector<UserProfile> users;
    std::vector<AdProfile> ads;

    // raw per-value true vectors (scaled); assembled user/ad vectors derive
    // from these with the same sum/mean combiner the learned models use
    std::map<std::string, std::vector<double>> involvement_vecs;
    std::map<std::string, std::vector<double>> demo_vecs;
    std::map<std::string, std::vector<double>> tech_vecs;
    std::map<std::string, std::vector<double>> ad_vecs;
    std::map<std::string, std::vector<double>> campaign_vecs;
    std::map<std::string, std::vector<double>> category_vecs;

    // p_ac indexed by (segment, involvement bin, device)
    std::vector<double> ac_rate;
    std::array<std::array<double, 3>, 8> ic_group_rate{};  // probe mean p_ic per (bin, device)

    double p_ac(std::uint32_t segment, std::uint32_t bin, std::uint32_t device) const {
        return ac_rate[(segment * involvement_bins().size() + bin) * device_types().size() + device];
    }

    double p_ic(std::uint32_t user, std::uint32_t ad) const {
        const UserProfile& u = users[user];
        const AdProfile& a = ads[ad];
        double dot = 0.0;
        for (std::size_t c = 0; c < u.vec.size(); ++c) dot += u.vec[c] * a.vec[c];
        return sigmoid(bias_star + dot);
    }

    // AC first, intentional click otherwise: p = p_ac + (1 - p_ac) p_ic
    double total_ctr(std::uint32_t user, std::uint32_t ad, std::uint32_t segment) const {
        const double ac = p_ac(segment, users[user].involvement, users[user].device);
        return ac + (1.0 - ac) * p_ic(user, ad);
    }

    std::uint32_t sample_segment(double u) const {
        std::size_t lo = 0, hi = segment_cdf.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (u < segment_cdf[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        return static_cast<std::uint32_t>(lo);
    }
};

namespace detail_world {

inline std::uint32_t categorical(double u, std::span<const double> probs) {
    double acc = 0.0;
    for (std::uint32_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return static_cast<std::uint32_t>(probs.size() - 1);
}

inline std::vector<double> value_vector(std::uint64_t seed, std::string_view group, std::string_view value,
                                        std::uint32_t dim) {
    std::vector<double> v(dim);
    const std::uint64_t base = mix64(seed, fnv1a64(group), fnv1a64(value));
    for (std::uint32_t c = 0; c < dim; ++c) {
        v[c] = normal_from_hash(mix64(base, c, 1u), mix64(base, c, 2u));
    }
    return v;
}

// per-impression AC probability that yields the target share of clicks,
// given the group's mean intentional rate
inline double share_to_rate(double share, double mean_ic) {
    if (share <= 0.0) return 0.0;
    return share * mean_ic / (1.0 - share + share * mean_ic);
}

}  // namespace detail_world

inline GroundTruthWorld build_world(const WorldConfig& cfg) {
    cfg.validate();
    GroundTruthWorld w;
    w.config = cfg;
    const std::uint64_t seed = cfg.seed;
    const std::uint32_t dim = cfg.latent_dim_true;
    const std::size_t n_bins = involvement_bins().size();
    const std::size_t n_devs = device_types().size();

    // --- segments: names, popularity weights, dwell instrumentation ---
    {
        const std::uint32_t positions = 3;
        std::vector<double> weights(cfg.n_segments);
        double total = 0.0;
        for (std::uint32_t i = 0; i < cfg.n_segments; ++i) {
            SegmentInfo s;
            s.name = "site" + std::to_string(i / positions) + ":p" + std::to_string(i % positions + 1);
            s.weight = std::exp(0.5 * normal_from_hash(mix64(seed, 0xA11Du, i, 1u), mix64(seed, 0xA11Du, i, 2u)));
            total += s.weight;
            w.segments.push_back(std::move(s));
            weights[i] = w.segments.back().weight;
        }
        double acc = 0.0;
        for (std::uint32_t i = 0; i < cfg.n_segments; ++i) {
            w.segments[i].weight /= total;
            acc += w.segments[i].weight;
            w.segment_cdf.push_back(acc);
        }
        w.segment_cdf.back() = 1.0;

        // pick segments in hashed order until the target traffic share logs dwell
        std::vector<std::uint32_t> order(cfg.n_segments);
        for (std::uint32_t i = 0; i < cfg.n_segments; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return mix64(seed, 0xD11Du, a) < mix64(seed, 0xD11Du, b);
        });
        double covered = 0.0;
        for (std::uint32_t idx : order) {
            if (covered >= cfg.dwell.logged_traffic_share) break;
            w.segments[idx].dwell_logged = true;
            covered += w.segments[idx].weight;
        }
    }

    // --- true value vectors ---
    auto make_group = [&](std::map<std::string, std::vector<double>>& out, std::string_view group,
                          const std::vector<std::string>& values) {
        for (const auto& v : values) out[v] = detail_world::value_vector(seed, group, v, dim);
    };
    make_group(w.involvement_vecs, "involvement", involvement_bins());
    make_group(w.demo_vecs, "demo", worlddef::demo_cells());
    {
        std::vector<std::string> tech;
        for (const auto& d : device_types()) tech.push_back("dev:" + d);
        for (const auto& o : worlddef::os_types()) tech.push_back("os:" + o);
        for (const auto& b : worlddef::browsers()) tech.push_back("br:" + b);
        make_group(w.tech_vecs, "tech", tech);
    }
    {
        std::vector<std::string> names;
        for (std::uint32_t i = 0; i < cfg.n_ads; ++i) names.push_back("a" + std::to_string(i));
        make_group(w.ad_vecs, "ad_id", names);
        names.clear();
        for (std::uint32_t i = 0; i < cfg.n_campaigns; ++i) names.push_back("c" + std::to_string(i));
        make_group(w.campaign_vecs, "campaign", names);
        names.clear();
        for (std::uint32_t i = 0; i < cfg.n_categories; ++i) names.push_back("cat" + std::to_string(i));
        make_group(w.category_vecs, "category", names);
    }

    // --- users and ads ---
    for (std::uint32_t i = 0; i < cfg.n_users; ++i) {
        SplitMix64 rng(mix64(seed, 0x05E8u, i));
        UserProfile u;
        u.involvement = static_cast<std::uint32_t>(rng.below(n_bins));
        u.demo = static_cast<std::uint32_t>(rng.below(worlddef::demo_cells().size()));
        u.device = detail_world::categorical(rng.uniform(), worlddef::kDeviceProbs);
        u.os = detail_world::categorical(rng.uniform(), worlddef::kOsProbs);
        u.browser = detail_world::categorical(rng.uniform(), worlddef::kBrowserProbs);
        w.users.push_back(std::move(u));
    }
    for (std::uint32_t i = 0; i < cfg.n_ads; ++i) {
        SplitMix64 rng(mix64(seed, 0xAD0Du, i));
        AdProfile a;
        a.campaign = static_cast<std::uint32_t>(rng.below(cfg.n_campaigns));
        a.category = static_cast<std::uint32_t>(rng.below(cfg.n_categories));
        a.bid = std::exp(cfg.bids.lognormal_mu + cfg.bids.lognormal_sigma * rng.normal());
        w.ads.push_back(std::move(a));
    }

    // --- assemble entity vectors (sum across fields, mean of tech values) ---
    auto assemble_user = [&](const UserProfile& u) {
        std::vector<double> v(dim, 0.0);
        const auto& vi = w.involvement_vecs.at(involvement_bins()[u.involvement]);
        const auto& vd = w.demo_vecs.at(worlddef::demo_cells()[u.demo]);
        const auto& t1 = w.tech_vecs.at("dev:" + device_types()[u.device]);
        const auto& t2 = w.tech_vecs.at("os:" + worlddef::os_types()[u.os]);
        const auto& t3 = w.tech_vecs.at("br:" + worlddef::browsers()[u.browser]);
        for (std::uint32_t c = 0; c < dim; ++c) {
            v[c] = vi[c] + vd[c] + (t1[c] + t2[c] + t3[c]) / 3.0;
        }
        return v;
    };
    auto assemble_ad = [&](std::uint32_t idx, const AdProfile& a) {
        std::vector<double> v(dim, 0.0);
        const auto& va = w.ad_vecs.at("a" + std::to_string(idx));
        const auto& vc = w.campaign_vecs.at("c" + std::to_string(a.campaign));
        const auto& vk = w.category_vecs.at("cat" + std::to_string(a.category));
        for (std::uint32_t c = 0; c < dim; ++c) v[c] = va[c] + vc[c] + vk[c];
        return v;
    };
    for (auto& u : w.users) u.vec = assemble_user(u);
    for (std::uint32_t i = 0; i < cfg.n_ads; ++i) w.ads[i].vec = assemble_ad(i, w.ads[i]);

    // --- probe: scale interaction strength, then calibrate the bias ---
    const std::uint32_t n_probe = 100000;
    std::vector<double> dots(n_probe);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> probe_pairs(n_probe);
    for (std::uint32_t i = 0; i < n_probe; ++i) {
        SplitMix64 rng(mix64(seed, 0x9B0Eu, i));
        const auto u = static_cast<std::uint32_t>(rng.below(cfg.n_users));
        const auto a = static_cast<std::uint32_t>(rng.below(cfg.n_ads));
        probe_pairs[i] = {u, a};
        double dot = 0.0;
        for (std::uint32_t c = 0; c < dim; ++c) dot += w.users[u].vec[c] * w.ads[a].vec[c];
        dots[i] = dot;
    }
    if (dim > 0) {
        double mean = 0.0;
        for (double d : dots) mean += d;
        mean /= n_probe;
        double var = 0.0;
        for (double d : dots) var += (d - mean) * (d - mean);
        var /= n_probe;
        // a spread below rounding noise means the world has no usable
        // interaction term to rescale
        if (var > 1e-12 && cfg.true_score_sigma > 0.0) {
            // dots scale with the square of the vector scale
            w.vec_scale = std::sqrt(cfg.true_score_sigma / std::sqrt(var));
            const double dot_scale = w.vec_scale * w.vec_scale;
            for (auto& u : w.users) {
                for (auto& x : u.vec) x *= w.vec_scale;
            }
            for (auto& a : w.ads) {
                for (auto& x : a.vec) x *= w.vec_scale;
            }
            for (auto& m : {&w.involvement_vecs, &w.demo_vecs, &w.tech_vecs, &w.ad_vecs,
                            &w.campaign_vecs, &w.category_vecs}) {
                for (auto& [_, vec] : *m) {
                    for (auto& x : vec) x *= w.vec_scale;
                }
            }
            for (auto& d : dots) d *= dot_scale;
        }
    }
    {
        double lo = -30.0, hi = 10.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            double mean = 0.0;
            for (double d : dots) mean += sigmoid(mid + d);
            mean /= n_probe;
            (mean < cfg.base_ic_rate ? lo : hi) = mid;
        }
        w.bias_star = 0.5 * (lo + hi);
    }
    {
        double mean = 0.0;
        std::array<std::array<double, 3>, 8> group_sum{};
        std::array<std::array<std::uint64_t, 3>, 8> group_n{};
        for (std::uint32_t i = 0; i < n_probe; ++i) {
            const double p = sigmoid(w.bias_star + dots[i]);
            mean += p;
            const UserProfile& u = w.users[probe_pairs[i].first];
            group_sum[u.involvement][u.device] += p;
            group_n[u.involvement][u.device] += 1;
        }
        w.mean_ic_rate = mean / n_probe;
        for (std::size_t b = 0; b < n_bins; ++b) {
            for (std::size_t d = 0; d < n_devs; ++d) {
                w.ic_group_rate[b][d] = group_n[b][d] ? group_sum[b][d] / static_cast<double>(group_n[b][d])
                                                      : w.mean_ic_rate;
            }
        }
    }

    // --- per-cell AC rates from click-share targets ---
    {
        std::vector<double> bin_dev_weight(n_bins * n_devs, 0.0);
        for (const auto& u : w.users) {
            bin_dev_weight[u.involvement * n_devs + u.device] += 1.0 / cfg.n_users;
        }
        auto target_share = [&](std::size_t bin) {
            return cfg.ac.involvement_shares ? (*cfg.ac.involvement_shares)[bin] : cfg.ac.global_share;
        };
        auto device_mult = [&](std::size_t dev) {
            auto it = cfg.ac.device_multipliers.find(device_types()[dev]);
            return it == cfg.ac.device_multipliers.end() ? 1.0 : it->second;
        };
        const std::size_t n_cells = cfg.n_segments * n_bins * n_devs;
        std::vector<double> share(n_cells, 0.0);
        for (std::uint32_t s = 0; s < cfg.n_segments; ++s) {
            const double seg_factor =
                cfg.ac.segment_jitter <= 0.0
                    ? 1.0
                    : std::exp(cfg.ac.segment_jitter *
                                   normal_from_hash(mix64(seed, 0xACFAu, s, 1u), mix64(seed, 0xACFAu, s, 2u)) -
                               0.5 * cfg.ac.segment_jitter * cfg.ac.segment_jitter);
            for (std::size_t b = 0; b < n_bins; ++b) {
                for (std::size_t d = 0; d < n_devs; ++d) {
                    const double raw = target_share(b) * device_mult(d) * seg_factor;
                    share[(s * n_bins + b) * n_devs + d] = std::clamp(raw, 0.0, 0.93);
                }
            }
        }
        // renormalize so the click-weighted share of each bin hits its target
        w.ac_rate.assign(n_cells, 0.0);
        for (int round = 0; round < 6; ++round) {
            for (std::size_t i = 0; i < n_cells; ++i) {
                const std::size_t b = (i / n_devs) % n_bins;
                const std::size_t d = i % n_devs;
                w.ac_rate[i] = detail_world::share_to_rate(share[i], w.ic_group_rate[b][d]);
            }
            for (std::size_t b = 0; b < n_bins; ++b) {
                if (target_share(b) <= 0.0) continue;
                double ac_mass = 0.0, click_mass = 0.0;
                for (std::uint32_t s = 0; s < cfg.n_segments; ++s) {
                    for (std::size_t d = 0; d < n_devs; ++d) {
                        const std::size_t i = (s * n_bins + b) * n_devs + d;
                        const double wgt = w.segments[s].weight * bin_dev_weight[b * n_devs + d];
                        const double p = w.ac_rate[i];
                        const double clicks = p + (1.0 - p) * w.ic_group_rate[b][d];
                        ac_mass += wgt * p;
                        click_mass += wgt * clicks;
                    }
                }
                if (ac_mass <= 0.0 || click_mass <= 0.0) continue;
                const double measured = ac_mass / click_mass;
                const double correction = target_share(b) / measured;
                for (std::uint32_t s = 0; s < cfg.n_segments; ++s) {
                    for (std::size_t d = 0; d < n_devs; ++d) {
                        const std::size_t i = (s * n_bins + b) * n_devs + d;
                        share[i] = std::clamp(share[i] * correction, 0.0, 0.93);
                    }
                }
            }
        }
        for (std::size_t i = 0; i < n_cells; ++i) {
            const std::size_t b = (i / n_devs) % n_bins;
            const std::size_t d = i % n_devs;
            w.ac_rate[i] = detail_world::share_to_rate(share[i], w.ic_group_rate[b][d]);
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// event generation

namespace detail_world {

inline void fill_event_features(const GroundTruthWorld& w, std::uint32_t user, std::uint32_t ad,
                                std::uint32_t segment, Event& e) {
    const UserProfile& u = w.users[user];
    const AdProfile& a = w.ads[ad];
    e.segment = w.segments[segment].name;
    e.user = {{"user_involvement", {involvement_bins()[u.involvement]}},
              {"tech",
               {"dev:" + device_types()[u.device], "os:" + worlddef::os_types()[u.os],
                "br:" + worlddef::browsers()[u.browser]}},
              {"demo", {worlddef::demo_cells()[u.demo]}}};
    e.ad = {{"ad_id", {"a" + std::to_string(ad)}},
            {"campaign", {"c" + std::to_string(a.campaign)}},
            {"category", {"cat" + std::to_string(a.category)}}};
    e.dwell_logged = w.segments[segment].dwell_logged;
}

}  // namespace detail_world

/// Event `index` of stream `stream_seed`: a pure function of (world, seed,
/// index), so shards of a stream agree with the whole.
inline Event generate_event(const GroundTruthWorld& w, std::uint64_t stream_seed, std::uint64_t index) {
    SplitMix64 rng(mix64(w.config.seed, stream_seed, index, 0xE7E7u));
    const auto user = static_cast<std::uint32_t>(rng.below(w.config.n_users));
    const std::uint32_t segment = w.sample_segment(rng.uniform());
    const auto ad = static_cast<std::uint32_t>(rng.below(w.config.n_ads));

    Event e;
    e.event_id = index;
    detail_world::fill_event_features(w, user, ad, segment, e);

    const UserProfile& u = w.users[user];
    const double p_ac = w.p_ac(segment, u.involvement, u.device);
    if (rng.uniform() < p_ac) {
        e.clicked = true;
        e.truth = TrueOutcome::kAccidental;
    } else if (rng.uniform() < w.p_ic(user, ad)) {
        e.clicked = true;
        e.truth = TrueOutcome::kIntentional;
    } else {
        e.truth = TrueOutcome::kSkip;
    }

    if (e.clicked && e.dwell_logged) {
        const DwellGenConfig& d = w.config.dwell;
        if (e.truth == TrueOutcome::kAccidental) {
            e.dwell_s = rng.uniform() * (d.tau_gen_s + d.blur_s);
        } else {
            const double base = d.tau_gen_s - d.blur_s * rng.uniform();
            e.dwell_s = std::max(0.0, base) + std::exp(d.ic_lognormal_mu + d.ic_lognormal_sigma * rng.normal());
        }
    }
    return e;
}

inline void generate_events(const GroundTruthWorld& w, std::uint64_t stream_seed, std::uint64_t begin,
                            std::uint64_t count, const EventVisitor& visit) {
    for (std::uint64_t i = 0; i < count; ++i) {
        visit(generate_event(w, stream_seed, begin + i));
    }
}

inline EventSource world_event_source(std::shared_ptr<const GroundTruthWorld> world,
                                      std::uint64_t stream_seed, std::uint64_t count) {
    return [world = std::move(world), stream_seed, count](const EventVisitor& visit) {
        generate_events(*world, stream_seed, 0, count, visit);
    };
}

// ---------------------------------------------------------------------------
// oracle scorers

/// Ground-truth total CTR recovered from an event's features alone; the true
/// model is attribute-based, so this is exact for any well-formed event.
class GroundTruthScorer final : public Scorer {
public:
    explicit GroundTruthScorer(const GroundTruthWorld& w) : w_(&w) {
        for (std::uint32_t i = 0; i < w.segments.size(); ++i) segment_idx_[w.segments[i].name] = i;
        for (std::uint32_t i = 0; i < involvement_bins().size(); ++i) bin_idx_[involvement_bins()[i]] = i;
        for (std::uint32_t i = 0; i < device_types().size(); ++i) device_idx_["dev:" + device_types()[i]] = i;
    }

    double predict_event(const Event& e) const override {
        const std::uint32_t dim = w_->config.latent_dim_true;
        std::vector<double> uv(dim, 0.0), av(dim, 0.0);

        const auto* invol = find_values(e.user, "user_involvement");
        const auto* tech = find_values(e.user, "tech");
        const auto* demo = find_values(e.user, "demo");
        const auto* ad_id = find_values(e.ad, "ad_id");
        const auto* campaign = find_values(e.ad, "campaign");
        const auto* category = find_values(e.ad, "category");
        if (!invol || !tech || !demo || !ad_id || !campaign || !category) {
            throw std::runtime_error("ground-truth scorer: event lacks simulator features");
        }
        accumulate(uv, w_->involvement_vecs, invol->front());
        accumulate(uv, w_->demo_vecs, demo->front());
        for (const auto& t : *tech) accumulate(uv, w_->tech_vecs, t, 1.0 / static_cast<double>(tech->size()));
        accumulate(av, w_->ad_vecs, ad_id->front());
        accumulate(av, w_->campaign_vecs, campaign->front());
        accumulate(av, w_->category_vecs, category->front());

        double dot = 0.0;
        for (std::uint32_t c = 0; c < dim; ++c) dot += uv[c] * av[c];
        const double p_ic = sigmoid(w_->bias_star + dot);

        std::uint32_t dev = 0;
        for (const auto& t : *tech) {
            auto it = device_idx_.find(t);
            if (it != device_idx_.end()) dev = it->second;
        }
        const double p_ac = w_->p_ac(segment_idx_.at(e.segment), bin_idx_.at(invol->front()), dev);
        return p_ac + (1.0 - p_ac) * p_ic;
    }

private:
    static void accumulate(std::vector<double>& out, const std::map<std::string, std::vector<double>>& table,
                           const std::string& value, double coeff = 1.0) {
        const auto& v = table.at(value);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += coeff * v[c];
    }

    const GroundTruthWorld* w_;
    std::unordered_map<std::string, std::uint32_t> segment_idx_;
    std::unordered_map<std::string, std::uint32_t> bin_idx_;
    std::unordered_map<std::string, std::uint32_t> device_idx_;
};

class ScaledScorer final : public Scorer {
public:
    ScaledScorer(const Scorer& inner, double factor) : inner_(&inner), factor_(factor) {}
    double predict_event(const Event& e) const override { return factor_ * inner_->predict_event(e); }

private:
    const Scorer* inner_;
    double factor_;
};

// ---------------------------------------------------------------------------
// world persistence (JSON, versioned, byte-stable)

inline constexpr int kWorldFormatVersion = 1;

inline nlohmann::json world_config_to_json(const WorldConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["n_users"] = c.n_users;
    j["n_ads"] = c.n_ads;
    j["n_campaigns"] = c.n_campaigns;
    j["n_categories"] = c.n_categories;
    j["n_segments"] = c.n_segments;
    j["latent_dim_true"] = c.latent_dim_true;
    j["true_score_sigma"] = c.true_score_sigma;
    j["base_ic_rate"] = c.base_ic_rate;
    j["ac"]["global_share"] = c.ac.global_share;
    if (c.ac.involvement_shares) j["ac"]["involvement_shares"] = *c.ac.involvement_shares;
    if (!c.ac.device_multipliers.empty()) j["ac"]["device_multipliers"] = c.ac.device_multipliers;
    j["ac"]["segment_jitter"] = c.ac.segment_jitter;
    j["dwell"]["logged_traffic_share"] = c.dwell.logged_traffic_share;
    j["dwell"]["tau_gen_s"] = c.dwell.tau_gen_s;
    j["dwell"]["ic_lognormal_mu"] = c.dwell.ic_lognormal_mu;
    j["dwell"]["ic_lognormal_sigma"] = c.dwell.ic_lognormal_sigma;
    j["dwell"]["blur_s"] = c.dwell.blur_s;
    j["bids"]["lognormal_mu"] = c.bids.lognormal_mu;
    j["bids"]["lognormal_sigma"] = c.bids.lognormal_sigma;
    return j;
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
    WorldConfig c;
    c.seed = j.value("seed", c.seed);
    c.n_users = j.value("n_users", c.n_users);
    c.n_ads = j.value("n_ads", c.n_ads);
    c.n_campaigns = j.value("n_campaigns", c.n_campaigns);
    c.n_categories = j.value("n_categories", c.n_categories);
    c.n_segments = j.value("n_segments", c.n_segments);
    c.latent_dim_true = j.value("latent_dim_true", c.latent_dim_true);
    c.true_score_sigma = j.value("true_score_sigma", c.true_score_sigma);
    c.base_ic_rate = j.value("base_ic_rate", c.base_ic_rate);
    if (j.contains("ac")) {
        const auto& a = j.at("ac");
        c.ac.global_share = a.value("global_share", c.ac.global_share);
        if (a.contains("involvement_shares")) {
            c.ac.involvement_shares = a.at("involvement_shares").get<std::vector<double>>();
        }
        if (a.contains("device_multipliers")) {
            c.ac.device_multipliers = a.at("device_multipliers").get<std::map<std::string, double>>();
        }
        c.ac.segment_jitter = a.value("segment_jitter", c.ac.segment_jitter);
    }
    if (j.contains("dwell")) {
        const auto& d = j.at("dwell");
        c.dwell.logged_traffic_share = d.value("logged_traffic_share", c.dwell.logged_traffic_share);
        c.dwell.tau_gen_s = d.value("tau_gen_s", c.dwell.tau_gen_s);
        c.dwell.ic_lognormal_mu = d.value("ic_lognormal_mu", c.dwell.ic_lognormal_mu);
        c.dwell.ic_lognormal_sigma = d.value("ic_lognormal_sigma", c.dwell.ic_lognormal_sigma);
        c.dwell.blur_s = d.value("blur_s", c.dwell.blur_s);
    }
    if (j.contains("bids")) {
        c.bids.lognormal_mu = j.at("bids").value("lognormal_mu", c.bids.lognormal_mu);
        c.bids.lognormal_sigma = j.at("bids").value("lognormal_sigma", c.bids.lognormal_sigma);
    }
    c.validate();
    return c;
}

inline nlohmann::json world_to_json(const GroundTruthWorld& w) {
    nlohmann::json j;
    j["format"] = "acfilter-world";
    j["version"] = kWorldFormatVersion;
    j["config"] = world_config_to_json(w.config);
    j["bias_star"] = w.bias_star;
    j["vec_scale"] = w.vec_scale;
    j["mean_ic_rate"] = w.mean_ic_rate;
    for (const auto& s : w.segments) {
        j["segments"].push_back({{"name", s.name}, {"weight", s.weight}, {"dwell_logged", s.dwell_logged}});
    }
    for (const auto& u : w.users) {
        j["users"].push_back({u.involvement, u.demo, u.device, u.os, u.browser});
    }
    for (const auto& a : w.ads) {
        j["ads"].push_back({{"campaign", a.campaign}, {"category", a.category}, {"bid", a.bid}});
    }
    j["vectors"]["involvement"] = w.involvement_vecs;
    j["vectors"]["demo"] = w.demo_vecs;
    j["vectors"]["tech"] = w.tech_vecs;
    j["vectors"]["ad_id"] = w.ad_vecs;
    j["vectors"]["campaign"] = w.campaign_vecs;
    j["vectors"]["category"] = w.category_vecs;
    j["ac_rate"] = w.ac_rate;
    for (const auto& row : w.ic_group_rate) {
        j["ic_group_rate"].push_back(std::vector<double>(row.begin(), row.end()));
    }
    return j;
}

inline GroundTruthWorld world_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "acfilter-world") throw std::runtime_error("not a world file");
    if (j.at("version").get<int>() != kWorldFormatVersion) {
        throw std::runtime_error("unsupported world format version");
    }
    GroundTruthWorld w;
    w.config = world_config_from_json(j.at("config"));
    w.bias_star = j.at("bias_star").get<double>();
    w.vec_scale = j.at("vec_scale").get<double>();
    w.mean_ic_rate = j.at("mean_ic_rate").get<double>();
    double acc = 0.0;
    for (const auto& js : j.at("segments")) {
        SegmentInfo s;
        s.name = js.at("name").get<std::string>();
        s.weight = js.at("weight").get<double>();
        s.dwell_logged = js.at("dwell_logged").get<bool>();
        acc += s.weight;
        w.segments.push_back(std::move(s));
        w.segment_cdf.push_back(acc);
    }
    if (!w.segment_cdf.empty()) w.segment_cdf.back() = 1.0;
    for (const auto& ju : j.at("users")) {
        UserProfile u;
        u.involvement = ju.at(0).get<std::uint32_t>();
        u.demo = ju.at(1).get<std::uint32_t>();
        u.device = ju.at(2).get<std::uint32_t>();
        u.os = ju.at(3).get<std::uint32_t>();
        u.browser = ju.at(4).get<std::uint32_t>();
        w.users.push_back(std::move(u));
    }
    for (const auto& ja : j.at("ads")) {
        AdProfile a;
        a.campaign = ja.at("campaign").get<std::uint32_t>();
        a.category = ja.at("category").get<std::uint32_t>();
        a.bid = ja.at("bid").get<double>();
        w.ads.push_back(std::move(a));
    }
    auto load_group = [&](std::map<std::string, std::vector<double>>& out, const char* key) {
        out = j.at("vectors").at(key).get<std::map<std::string, std::vector<double>>>();
    };
    load_group(w.involvement_vecs, "involvement");
    load_group(w.demo_vecs, "demo");
    load_group(w.tech_vecs, "tech");
    load_group(w.ad_vecs, "ad_id");
    load_group(w.campaign_vecs, "campaign");
    load_group(w.category_vecs, "category");
    w.ac_rate = j.at("ac_rate").get<std::vector<double>>();
    for (std::size_t b = 0; b < w.ic_group_rate.size(); ++b) {
        for (std::size_t d = 0; d < w.ic_group_rate[b].size(); ++d) {
            w.ic_group_rate[b][d] = j.at("ic_group_rate").at(b).at(d).get<double>();
        }
    }

    // assembled vectors derive from the stored tables
    const std::uint32_t dim = w.config.latent_dim_true;
    for (auto& u : w.users) {
        u.vec.assign(dim, 0.0);
        const auto& vi = w.involvement_vecs.at(involvement_bins()[u.involvement]);
        const auto& vd = w.demo_vecs.at(worlddef::demo_cells()[u.demo]);
        const auto& t1 = w.tech_vecs.at("dev:" + device_types()[u.device]);
        const auto& t2 = w.tech_vecs.at("os:" + worlddef::os_types()[u.os]);
        const auto& t3 = w.tech_vecs.at("br:" + worlddef::browsers()[u.browser]);
        for (std::uint32_t c = 0; c < dim; ++c) u.vec[c] = vi[c] + vd[c] + (t1[c] + t2[c] + t3[c]) / 3.0;
    }
    for (std::size_t i = 0; i < w.ads.size(); ++i) {
        auto& a = w.ads[i];
        a.vec.assign(dim, 0.0);
        const auto& va = w.ad_vecs.at("a" + std::to_string(i));
        const auto& vc = w.campaign_vecs.at("c" + std::to_string(a.campaign));
        const auto& vk = w.category_vecs.at("cat" + std::to_string(a.category));
        for (std::uint32_t c = 0; c < dim; ++c) a.vec[c] = va[c] + vc[c] + vk[c];
    }
    return w;
}

inline void save_world(const GroundTruthWorld& w, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open world file for writing: " + path.string());
    os << world_to_json(w).dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline GroundTruthWorld load_world(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open world file: " + path.string());
    nlohmann::json j;
    is >> j;
    return world_from_json(j);
}

}  // namespace acfilter
