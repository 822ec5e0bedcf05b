#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "acfilter/hash.hpp"
#include "acfilter/math.hpp"
#include "acfilter/schema.hpp"

namespace acfilter {

struct ModelHyper {
    std::uint32_t dim = 16;          // latent vector length D
    double step_size = 0.1;          // AdaGrad eta
    double adagrad_epsilon = 1e-8;
    double l2_lambda = 1e-6;         // applied per sample to touched vectors; bias unregularized
    double init_sigma = 0.01;        // lazy init N(0, sigma^2)

    void validate() const {
        if (dim < 1) throw std::invalid_argument("model: dim must be >= 1");
        if (step_size <= 0.0) throw std::invalid_argument("model: step_size must be > 0");
        if (adagrad_epsilon <= 0.0) throw std::invalid_argument("model: adagrad_epsilon must be > 0");
        if (l2_lambda < 0.0) throw std::invalid_argument("model: l2_lambda must be >= 0");
        if (init_sigma <= 0.0) throw std::invalid_argument("model: init_sigma must be > 0");
    }
};

struct ParamVector {
    std::vector<double> v;    // latent components
    std::vector<double> g2;   // AdaGrad squared-gradient accumulators
};

struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

using ParamMap = std::unordered_map<std::string, ParamVector, StringHash, std::equal_to<>>;

// Gradients of one update, captured for finite-difference checks.
struct GradientRecord {
    double bias = 0.0;
    struct Entry {
        std::uint32_t field;
        std::string value;
        std::vector<double> grad;
    };
    std::vector<Entry> params;
};

/// Scoring interface shared by trained snapshots and ground-truth oracles.
struct Scorer {
    virtual ~Scorer() = default;
    virtual double predict_event(const Event& e) const = 0;
};

namespace detail {

// Component c of the lazily initialized vector for (field, value). Seeded by
// parameter identity, not arrival order, so initialization is independent of
// stream sharding.
inline double init_component(std::uint64_t seed, std::uint32_t field, std::string_view value,
                             std::uint32_t component, double sigma) {
    const std::uint64_t vh = fnv1a64(value);
    const std::uint64_t a = mix64(seed, field, vh, component, 0xACu);
    const std::uint64_t b = mix64(seed, field, vh, component, 0xF1u);
    return sigma * normal_from_hash(a, b);
}

inline void init_vector(std::uint64_t seed, std::uint32_t field, std::string_view value,
                        std::uint32_t dim, double sigma, std::vector<double>& out) {
    out.resize(dim);
    for (std::uint32_t c = 0; c < dim; ++c) {
        out[c] = init_component(seed, field, value, c, sigma);
    }
}

// (bound value, combiner coefficient) after merging duplicates. Values from
// a multi-value field with m entries carry coefficient 1/m so that fields of
// different cardinality stay comparable.
struct Touched {
    std::uint32_t field;
    const std::string* value;
    double coeff;
};

inline void collect_touched(const FeatureSchema& schema, std::span<const BoundValue> values,
                            std::vector<Touched>& out) {
    out.clear();
    for (const auto& bv : values) {
        double coeff = 1.0;
        if (schema.features[bv.field].multi_value) {
            std::size_t m = 0;
            for (const auto& other : values) {
                if (other.field == bv.field) ++m;
            }
            coeff = 1.0 / static_cast<double>(m);
        }
        bool merged = false;
        for (auto& t : out) {
            if (t.field == bv.field && *t.value == *bv.value) {
                t.coeff += coeff;
                merged = true;
                break;
            }
        }
        if (!merged) out.push_back(Touched{bv.field, bv.value, coeff});
    }
}

}  // namespace detail

/// Sparse latent factor model: pCTR(u, a) = sigmoid(b + v_u . v_a), where the
/// side vectors are built from per-feature-value vectors. Vectors are created
/// lazily from N(0, init_sigma^2) on first touch; training is one-pass
/// AdaGrad over a regularized cross-entropy loss.
class LatentFactorModel {
public:
    LatentFactorModel(FeatureSchema schema, ModelHyper hyper, std::uint64_t rng_seed)
        : schema_(std::move(schema)), hyper_(hyper), seed_(rng_seed), fields_(schema_.features.size()) {
        schema_.validate();
        hyper_.validate();
        for (std::size_t i = 0; i < schema_.features.size(); ++i) {
            if (schema_.features[i].vocabulary_hint) {
                fields_[i].reserve(*schema_.features[i].vocabulary_hint);
            }
        }
    }

    const FeatureSchema& schema() const { return schema_; }
    const ModelHyper& hyper() const { return hyper_; }
    std::uint64_t rng_seed() const { return seed_; }
    double bias() const { return bias_; }
    double bias_accumulator() const { return bias_g2_; }
    std::uint32_t dim() const { return hyper_.dim; }

    /// Element-wise combination of the latent vectors of one side's values:
    /// plain sum across fields, mean within a multi-value field. Missing
    /// vectors are evaluated from their deterministic initialization without
    /// being stored, so const scoring matches what training would see.
    std::vector<double> entity_vector(std::span<const BoundValue> values) const {
        std::vector<double> out;
        entity_vector_into(values, out);
        return out;
    }

    void entity_vector_into(std::span<const BoundValue> values, std::vector<double>& out) const {
        if (values.empty()) throw std::runtime_error("no features for side");
        thread_local std::vector<detail::Touched> touched;
        detail::collect_touched(schema_, values, touched);
        out.assign(hyper_.dim, 0.0);
        thread_local std::vector<double> fresh;
        for (const auto& t : touched) {
            const ParamMap& m = fields_[t.field];
            auto it = m.find(std::string_view(*t.value));
            const std::vector<double>* vec;
            if (it != m.end()) {
                vec = &it->second.v;
            } else {
                detail::init_vector(seed_, t.field, *t.value, hyper_.dim, hyper_.init_sigma, fresh);
                vec = &fresh;
            }
            for (std::uint32_t c = 0; c < hyper_.dim; ++c) {
                out[c] += t.coeff * (*vec)[c];
            }
        }
    }

    double score(const BoundEvent& be) const {
        thread_local std::vector<double> vu, va;
        entity_vector_into(be.user, vu);
        entity_vector_into(be.ad, va);
        double dot = 0.0;
        for (std::uint32_t c = 0; c < hyper_.dim; ++c) dot += vu[c] * va[c];
        return bias_ + dot;
    }

    double predict(const BoundEvent& be) const { return sigmoid(score(be)); }

    /// One sparse AdaGrad step on the cross-entropy loss against a
    /// probability label. Returns the pre-update prediction. Accumulators are
    /// bumped before the step; only parameters touched by this event move.
    double sgd_update(const BoundEvent& be, double label) { return update_impl(be, label, nullptr); }

    double sgd_update_recording(const BoundEvent& be, double label, GradientRecord& record) {
        return update_impl(be, label, &record);
    }

    // --- direct parameter access (persistence, seeding, tests) ---

    std::size_t field_count() const { return fields_.size(); }
    const ParamMap& field_entries(std::uint32_t field) const { return fields_.at(field); }

    const std::vector<double>* find_vector(std::uint32_t field, std::string_view value) const {
        auto it = fields_.at(field).find(value);
        return it == fields_.at(field).end() ? nullptr : &it->second.v;
    }

    void set_bias(double b, double g2 = 0.0) {
        bias_ = b;
        bias_g2_ = g2;
    }

    void set_entry(std::uint32_t field, std::string_view value, std::vector<double> v,
                   std::vector<double> g2) {
        if (v.size() != hyper_.dim || g2.size() != hyper_.dim) {
            throw std::invalid_argument("set_entry: vector length != model dim");
        }
        ParamVector& p = fields_.at(field)[std::string(value)];
        p.v = std::move(v);
        p.g2 = std::move(g2);
    }

    void set_vector(std::uint32_t field, std::string_view value, std::vector<double> v) {
        std::vector<double> g2(hyper_.dim, 0.0);
        set_entry(field, value, std::move(v), std::move(g2));
    }

    std::size_t parameter_count() const {
        std::size_t n = 1;
        for (const auto& m : fields_) n += m.size() * hyper_.dim;
        return n;
    }

    /// Order-independent digest of every parameter and accumulator bit.
    std::uint64_t checksum() const {
        auto hash_double = [](double d) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, sizeof(bits));
            return bits;
        };
        std::uint64_t h = mix64(hash_double(bias_), hash_double(bias_g2_));
        for (std::uint32_t f = 0; f < fields_.size(); ++f) {
            std::uint64_t field_h = 0;
            for (const auto& [value, p] : fields_[f]) {
                std::uint64_t e = fnv1a64(value);
                for (std::uint32_t c = 0; c < hyper_.dim; ++c) {
                    e = mix64(e, hash_double(p.v[c]), hash_double(p.g2[c]));
                }
                field_h ^= e;  // xor: independent of map iteration order
            }
            h = mix64(h, f, field_h);
        }
        return h;
    }

private:
    ParamVector& materialize(std::uint32_t field, const std::string& value) {
        ParamMap& m = fields_[field];
        auto it = m.find(std::string_view(value));
        if (it != m.end()) return it->second;
        ParamVector& p = m[value];
        detail::init_vector(seed_, field, value, hyper_.dim, hyper_.init_sigma, p.v);
        p.g2.assign(hyper_.dim, 0.0);
        return p;
    }

    double update_impl(const BoundEvent& be, double label, GradientRecord* record) {
        thread_local std::vector<detail::Touched> tu, ta;
        detail::collect_touched(schema_, be.user, tu);
        detail::collect_touched(schema_, be.ad, ta);
        if (tu.empty() || ta.empty()) throw std::runtime_error("no features for side");

        thread_local std::vector<ParamVector*> pu, pa;
        pu.clear();
        pa.clear();
        for (const auto& t : tu) pu.push_back(&materialize(t.field, *t.value));
        for (const auto& t : ta) pa.push_back(&materialize(t.field, *t.value));

        const std::uint32_t d = hyper_.dim;
        thread_local std::vector<double> vu, va;
        vu.assign(d, 0.0);
        va.assign(d, 0.0);
        for (std::size_t i = 0; i < pu.size(); ++i) {
            for (std::uint32_t c = 0; c < d; ++c) vu[c] += tu[i].coeff * pu[i]->v[c];
        }
        for (std::size_t i = 0; i < pa.size(); ++i) {
            for (std::uint32_t c = 0; c < d; ++c) va[c] += ta[i].coeff * pa[i]->v[c];
        }
        double dot = 0.0;
        for (std::uint32_t c = 0; c < d; ++c) dot += vu[c] * va[c];
        const double p = sigmoid(bias_ + dot);
        const double g = p - label;

        const double eta = hyper_.step_size;
        const double eps = hyper_.adagrad_epsilon;
        const double lambda = hyper_.l2_lambda;

        if (record) {
            record->bias = g;
            record->params.clear();
        }
        bias_g2_ += g * g;
        bias_ -= eta * g / std::sqrt(bias_g2_ + eps);

        // Side vectors were assembled before any step, so every gradient
        // below backpropagates through the pre-update opposite entity vector.
        auto step_side = [&](const std::vector<detail::Touched>& touched,
                             const std::vector<ParamVector*>& params, const std::vector<double>& opposite) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                ParamVector& pv = *params[i];
                GradientRecord::Entry* rec_entry = nullptr;
                if (record) {
                    record->params.push_back({touched[i].field, *touched[i].value, std::vector<double>(d)});
                    rec_entry = &record->params.back();
                }
                const double coeff = touched[i].coeff;
                for (std::uint32_t c = 0; c < d; ++c) {
                    const double grad = g * coeff * opposite[c] + lambda * pv.v[c];
                    if (rec_entry) rec_entry->grad[c] = grad;
                    pv.g2[c] += grad * grad;
                    pv.v[c] -= eta * grad / std::sqrt(pv.g2[c] + eps);
                }
            }
        };
        step_side(tu, pu, va);
        step_side(ta, pa, vu);
        return p;
    }

    FeatureSchema schema_;
    ModelHyper hyper_;
    std::uint64_t seed_;
    double bias_ = 0.0;
    double bias_g2_ = 0.0;
    std::vector<ParamMap> fields_;
};

/// Read-only scoring copy of a model. Accumulators are not carried; unseen
/// values still score through their deterministic lazy initialization.
class ModelSnapshot final : public Scorer {
public:
    ModelSnapshot(const LatentFactorModel& m, double bias_shift = 0.0)
        : schema_(m.schema()), dim_(m.dim()), seed_(m.rng_seed()),
          init_sigma_(m.hyper().init_sigma), bias_(m.bias() + bias_shift),
          fields_(m.field_count()) {
        for (std::uint32_t f = 0; f < m.field_count(); ++f) {
            for (const auto& [value, p] : m.field_entries(f)) {
                fields_[f].emplace(value, p.v);
            }
        }
    }

    const FeatureSchema& schema() const { return schema_; }
    double bias() const { return bias_; }

    double predict_event(const Event& e) const override {
        thread_local BoundEvent be;
        bind_event(schema_, e, be);
        return predict_bound(be);
    }

    double predict_bound(const BoundEvent& be) const {
        thread_local std::vector<double> vu, va;
        side_vector(be.user, vu);
        side_vector(be.ad, va);
        double dot = 0.0;
        for (std::uint32_t c = 0; c < dim_; ++c) dot += vu[c] * va[c];
        return sigmoid(bias_ + dot);
    }

private:
    using VecMap = std::unordered_map<std::string, std::vector<double>, StringHash, std::equal_to<>>;

    void side_vector(std::span<const BoundValue> values, std::vector<double>& out) const {
        if (values.empty()) throw std::runtime_error("no features for side");
        thread_local std::vector<detail::Touched> touched;
        detail::collect_touched(schema_, values, touched);
        out.assign(dim_, 0.0);
        thread_local std::vector<double> fresh;
        for (const auto& t : touched) {
            auto it = fields_[t.field].find(std::string_view(*t.value));
            const std::vector<double>* vec;
            if (it != fields_[t.field].end()) {
                vec = &it->second;
            } else {
                detail::init_vector(seed_, t.field, *t.value, dim_, init_sigma_, fresh);
                vec = &fresh;
            }
            for (std::uint32_t c = 0; c < dim_; ++c) out[c] += t.coeff * (*vec)[c];
        }
    }

    FeatureSchema schema_;
    std::uint32_t dim_;
    std::uint64_t seed_;
    double init_sigma_;
    double bias_;
    std::vector<VecMap> fields_;
};

/// Scoring copy with the bias shifted by -ln(R), undoing the inflation from
/// training on a stream whose skips were kept with probability 1/R.
inline ModelSnapshot apply_downsampling_correction(const LatentFactorModel& m, double downsample_r) {
    if (!(downsample_r > 1.0)) {
        throw std::invalid_argument("invalid down-sampling factor");
    }
    return ModelSnapshot(m, -std::log(downsample_r));
}

}  // namespace acfilter
