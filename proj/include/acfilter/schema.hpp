#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "acfilter/hash.hpp"

namespace acfilter {

enum class Side : std::uint8_t { kUser, kAd };

inline const char* side_name(Side s) { return s == Side::kUser ? "user" : "ad"; }

struct FeatureField {
    std::string name;
    Side side = Side::kUser;
    bool multi_value = false;
    std::optional<std::uint32_t> vocabulary_hint;
};

/// Ordered feature list of one model. Field order is part of the model
/// identity (it enters the schema digest and the parameter file layout).
struct FeatureSchema {
    std::vector<FeatureField> features;

    void validate() const {
        bool has_user = false;
        bool has_ad = false;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const auto& f = features[i];
            if (f.name.empty()) {
                throw std::invalid_argument("schema: empty feature name");
            }
            for (std::size_t j = i + 1; j < features.size(); ++j) {
                if (features[j].name == f.name) {
                    throw std::invalid_argument("schema: duplicate feature name '" + f.name + "'");
                }
            }
            (f.side == Side::kUser ? has_user : has_ad) = true;
        }
        if (!has_user || !has_ad) {
            throw std::invalid_argument("schema: needs at least one user-side and one ad-side feature");
        }
    }

    // Canonical text form; digest() is stable across runs and platforms.
    std::string canonical() const {
        std::string out;
        for (const auto& f : features) {
            out += f.name;
            out += '|';
            out += side_name(f.side);
            out += '|';
            out += f.multi_value ? "multi" : "single";
            out += '\n';
        }
        return out;
    }

    std::uint64_t digest() const { return fnv1a64(canonical()); }
};

// Ground-truth outcome attached by the simulator. Never serialized; the
// public record exposes only (clicked, dwell_s).
enum class TrueOutcome : std::uint8_t { kUnknown, kSkip, kIntentional, kAccidental };

using FeatureMap = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// One impression record. `user` and `ad` map feature names to categorical
/// values; multi-value features carry several values under one name.
struct Event {
    std::uint64_t event_id = 0;
    std::string segment;
    FeatureMap user;
    FeatureMap ad;
    bool clicked = false;
    std::optional<double> dwell_s;
    bool dwell_logged = false;
    TrueOutcome truth = TrueOutcome::kUnknown;

    bool operator==(const Event&) const = default;
};

inline void validate_event(const Event& e) {
    if (e.dwell_s.has_value()) {
        if (!e.clicked) {
            throw std::invalid_argument("event " + std::to_string(e.event_id) + ": dwell_s on a skip");
        }
        if (!e.dwell_logged) {
            throw std::invalid_argument("event " + std::to_string(e.event_id) +
                                        ": dwell_s on a segment that does not log dwell-time");
        }
        if (*e.dwell_s < 0.0) {
            throw std::invalid_argument("event " + std::to_string(e.event_id) + ": negative dwell_s");
        }
    }
}

// A feature value bound to a schema field. The string is borrowed from the
// event, which must outlive the bound view.
struct BoundValue {
    std::uint32_t field = 0;
    const std::string* value = nullptr;
};

struct BoundEvent {
    std::vector<BoundValue> user;
    std::vector<BoundValue> ad;

    void clear() {
        user.clear();
        ad.clear();
    }
};

// The reserved feature name "segment" sources its value from the event's
// top-level segment string rather than the user/ad objects.
inline constexpr std::string_view kSegmentFeature = "segment";

inline const std::vector<std::string>* find_values(const FeatureMap& m, const std::string& name) {
    for (const auto& [key, values] : m) {
        if (key == name) return &values;
    }
    return nullptr;
}

/// Resolves a schema against an event's named features. Throws with the
/// offending field name when the event cannot supply a field.
inline void bind_event(const FeatureSchema& schema, const Event& e, BoundEvent& out) {
    out.clear();
    for (std::uint32_t i = 0; i < schema.features.size(); ++i) {
        const auto& field = schema.features[i];
        auto& side_list = field.side == Side::kUser ? out.user : out.ad;
        if (field.name == kSegmentFeature) {
            side_list.push_back(BoundValue{i, &e.segment});
            continue;
        }
        const std::vector<std::string>* values = find_values(e.user, field.name);
        if (values == nullptr) values = find_values(e.ad, field.name);
        if (values == nullptr) {
            throw std::runtime_error("event " + std::to_string(e.event_id) + " lacks feature '" +
                                     field.name + "' required by the model schema");
        }
        if (!field.multi_value && values->size() != 1) {
            throw std::runtime_error("event " + std::to_string(e.event_id) + ": feature '" + field.name +
                                     "' expects a single value, got " + std::to_string(values->size()));
        }
        for (const auto& v : *values) {
            side_list.push_back(BoundValue{i, &v});
        }
    }
}

inline BoundEvent bind_event(const FeatureSchema& schema, const Event& e) {
    BoundEvent b;
    bind_event(schema, e, b);
    return b;
}

// Feature sets used by the bundled simulator. The thin accidental-click
// model sees user/context features only; site-and-position plays the "ad"
// role in its bilinear form.
inline FeatureSchema default_ac_schema() {
    return FeatureSchema{{
        {"user_involvement", Side::kUser, false, {}},
        {"tech", Side::kUser, true, {}},
        {std::string(kSegmentFeature), Side::kAd, false, {}},
    }};
}

inline FeatureSchema default_click_schema() {
    return FeatureSchema{{
        {"user_involvement", Side::kUser, false, {}},
        {"tech", Side::kUser, true, {}},
        {"demo", Side::kUser, false, {}},
        {"ad_id", Side::kAd, false, {}},
        {"campaign", Side::kAd, false, {}},
        {"category", Side::kAd, false, {}},
        {std::string(kSegmentFeature), Side::kAd, false, {}},
    }};
}

}  // namespace acfilter
