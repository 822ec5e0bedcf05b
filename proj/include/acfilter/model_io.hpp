#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfilter/model.hpp"

namespace acfilter {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are not supported");

// Versioned binary model file: magic, format version, schema digest and a
// self-describing schema block, hyper-parameters, a small key/value meta
// section, then every (field, value) vector with its AdaGrad accumulators.
// Entries are written sorted so identical models produce identical bytes.
inline constexpr char kModelMagic[4] = {'A', 'C', 'L', 'F'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

// Free-form numeric annotations stored with a model. Trainers record e.g.
// the down-sampling factor they were run with.
using ModelMeta = std::map<std::string, double>;

inline constexpr const char* kMetaDownsampleR = "trained_downsample_r";

namespace detail_io {

inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline double get_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace detail_io

inline nlohmann::json schema_to_json(const FeatureSchema& schema) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : schema.features) {
        nlohmann::json jf;
        jf["name"] = f.name;
        jf["side"] = side_name(f.side);
        jf["multi_value"] = f.multi_value;
        if (f.vocabulary_hint) jf["vocabulary_hint"] = *f.vocabulary_hint;
        features.push_back(jf);
    }
    return nlohmann::json{{"features", features}};
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
    FeatureSchema schema;
    for (const auto& jf : j.at("features")) {
        FeatureField f;
        f.name = jf.at("name").get<std::string>();
        const std::string side = jf.at("side").get<std::string>();
        if (side == "user") {
            f.side = Side::kUser;
        } else if (side == "ad") {
            f.side = Side::kAd;
        } else {
            throw std::runtime_error("schema: unknown side '" + side + "'");
        }
        f.multi_value = jf.at("multi_value").get<bool>();
        if (jf.contains("vocabulary_hint")) f.vocabulary_hint = jf.at("vocabulary_hint").get<std::uint32_t>();
        schema.features.push_back(std::move(f));
    }
    schema.validate();
    return schema;
}

inline void save_model(const LatentFactorModel& m, const std::filesystem::path& path,
                       const ModelMeta& meta = {}) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open model file for writing: " + path.string());
    using namespace detail_io;

    os.write(kModelMagic, 4);
    put_u32(os, kModelFormatVersion);
    put_u64(os, m.schema().digest());
    put_str(os, schema_to_json(m.schema()).dump());

    put_u32(os, m.dim());
    put_f64(os, m.hyper().step_size);
    put_f64(os, m.hyper().adagrad_epsilon);
    put_f64(os, m.hyper().l2_lambda);
    put_f64(os, m.hyper().init_sigma);
    put_u64(os, m.rng_seed());

    put_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [key, value] : meta) {  // std::map: already sorted
        put_str(os, key);
        put_f64(os, value);
    }

    put_f64(os, m.bias());
    put_f64(os, m.bias_accumulator());

    for (std::uint32_t f = 0; f < m.field_count(); ++f) {
        const ParamMap& entries = m.field_entries(f);
        std::vector<const std::string*> keys;
        keys.reserve(entries.size());
        for (const auto& [value, p] : entries) keys.push_back(&value);
        std::sort(keys.begin(), keys.end(), [](const auto* a, const auto* b) { return *a < *b; });
        put_u64(os, keys.size());
        for (const auto* key : keys) {
            const ParamVector& p = entries.find(std::string_view(*key))->second;
            put_str(os, *key);
            for (double x : p.v) put_f64(os, x);
            for (double x : p.g2) put_f64(os, x);
        }
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

struct LoadedModel {
    LatentFactorModel model;
    ModelMeta meta;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open model file: " + path.string());
    using namespace detail_io;

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kModelMagic, 4) != 0) {
        throw std::runtime_error("not a model file (bad magic): " + path.string());
    }
    const std::uint32_t version = get_u32(is);
    if (version != kModelFormatVersion) {
        throw std::runtime_error("unsupported model format version " + std::to_string(version) +
                                 " in " + path.string());
    }
    const std::uint64_t stored_digest = get_u64(is);
    FeatureSchema schema = schema_from_json(nlohmann::json::parse(get_str(is)));
    if (schema.digest() != stored_digest) {
        throw std::runtime_error("model file schema digest mismatch (corrupt file?): " + path.string());
    }

    ModelHyper hyper;
    hyper.dim = get_u32(is);
    hyper.step_size = get_f64(is);
    hyper.adagrad_epsilon = get_f64(is);
    hyper.l2_lambda = get_f64(is);
    hyper.init_sigma = get_f64(is);
    const std::uint64_t seed = get_u64(is);

    ModelMeta meta;
    const std::uint32_t n_meta = get_u32(is);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string key = get_str(is);
        meta[key] = get_f64(is);
    }

    LatentFactorModel m(schema, hyper, seed);
    const double bias = get_f64(is);
    const double bias_g2 = get_f64(is);
    m.set_bias(bias, bias_g2);

    for (std::uint32_t f = 0; f < m.field_count(); ++f) {
        const std::uint64_t n = get_u64(is);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string value = get_str(is);
            std::vector<double> v(hyper.dim), g2(hyper.dim);
            for (auto& x : v) x = get_f64(is);
            for (auto& x : g2) x = get_f64(is);
            m.set_entry(f, value, std::move(v), std::move(g2));
        }
    }
    if (!is) throw std::runtime_error("truncated model file: " + path.string());
    return LoadedModel{std::move(m), std::move(meta)};
}

/// Digest check with a per-field diagnosis instead of a bare mismatch error.
inline void require_schema_match(const FeatureSchema& expected, const FeatureSchema& actual,
                                 const std::string& context) {
    if (expected.digest() == actual.digest()) return;
    std::string diag = "schema mismatch (" + context + "):";
    const std::size_t n = std::max(expected.features.size(), actual.features.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= expected.features.size()) {
            diag += " [unexpected field '" + actual.features[i].name + "']";
        } else if (i >= actual.features.size()) {
            diag += " [missing field '" + expected.features[i].name + "']";
        } else {
            const auto& e = expected.features[i];
            const auto& a = actual.features[i];
            if (e.name != a.name || e.side != a.side || e.multi_value != a.multi_value) {
                diag += " [field " + std::to_string(i) + ": expected '" + e.name + "'/" +
                        side_name(e.side) + (e.multi_value ? "/multi" : "/single") + ", got '" +
                        a.name + "'/" + side_name(a.side) + (a.multi_value ? "/multi" : "/single") + "]";
            }
        }
    }
    throw std::runtime_error(diag);
}

}  // namespace acfilter
