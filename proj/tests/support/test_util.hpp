#pragma once

// Shared helpers for the unit and acceptance suites: small schemas, random
// event/model generators, and the finite-difference gradient oracle.

#include <cmath>
#include <string>
#include <vector>

#include "acfilter/hash.hpp"
#include "acfilter/math.hpp"
#include "acfilter/model.hpp"
#include "acfilter/schema.hpp"

namespace acfilter::testutil {

inline FeatureSchema tiny_schema() {
    return FeatureSchema{{
        {"u", Side::kUser, false, {}},
        {"a", Side::kAd, false, {}},
    }};
}

inline FeatureSchema mixed_schema() {
    return FeatureSchema{{
        {"u_one", Side::kUser, false, {}},
        {"u_many", Side::kUser, true, {}},
        {"a_one", Side::kAd, false, {}},
        {"a_many", Side::kAd, true, {}},
    }};
}

// Event over mixed_schema with 1-3 values in each multi-value field.
inline Event random_mixed_event(SplitMix64& rng, std::uint64_t id) {
    auto val = [&](const char* prefix, int n) { return std::string(prefix) + std::to_string(rng.below(n)); };
    Event e;
    e.event_id = id;
    e.segment = "seg" + std::to_string(rng.below(3));
    std::vector<std::string> um, am;
    const int nu = 1 + static_cast<int>(rng.below(3));
    const int na = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < nu; ++i) um.push_back(val("m", 6));
    for (int i = 0; i < na; ++i) am.push_back(val("n", 6));
    e.user = {{"u_one", {val("u", 5)}}, {"u_many", um}};
    e.ad = {{"a_one", {val("a", 5)}}, {"a_many", am}};
    return e;
}

// A model over mixed_schema with parameters spread wide enough that update
// gradients are well away from rounding noise.
inline LatentFactorModel random_mixed_model(SplitMix64& rng, ModelHyper hyper, std::uint64_t seed) {
    LatentFactorModel m(mixed_schema(), hyper, seed);
    m.set_bias(rng.normal() * 0.5);
    auto fill = [&](std::uint32_t field, const char* prefix, int n) {
        for (int i = 0; i < n; ++i) {
            std::vector<double> v(hyper.dim), g2(hyper.dim);
            for (auto& x : v) x = rng.normal() * 0.5;
            for (auto& x : g2) x = rng.uniform() * 2.0;
            m.set_entry(field, prefix + std::to_string(i), std::move(v), std::move(g2));
        }
    };
    fill(0, "u", 5);
    fill(1, "m", 6);
    fill(2, "a", 5);
    fill(3, "n", 6);
    return m;
}

// Central finite difference of the per-event objective
//   cross_entropy(predict, label) + (lambda/2) * theta^2   (vectors)
//   cross_entropy(predict, label)                          (bias)
// with respect to one coordinate. The model is restored before returning.
inline double fd_gradient(LatentFactorModel& m, const BoundEvent& be, double label,
                          std::uint32_t field, const std::string& value, std::uint32_t comp,
                          double h = 1e-6) {
    const std::vector<double>* vec = m.find_vector(field, value);
    if (vec == nullptr) throw std::logic_error("fd_gradient: parameter not materialized");
    std::vector<double> original = *vec;
    const double lambda = m.hyper().l2_lambda;

    auto objective_at = [&](double theta) {
        std::vector<double> v = original;
        v[comp] = theta;
        m.set_vector(field, value, v);
        return cross_entropy(m.predict(be), label) + 0.5 * lambda * theta * theta;
    };
    const double theta0 = original[comp];
    const double up = objective_at(theta0 + h);
    const double down = objective_at(theta0 - h);
    m.set_vector(field, value, original);
    return (up - down) / (2.0 * h);
}

inline double fd_bias_gradient(LatentFactorModel& m, const BoundEvent& be, double label,
                               double h = 1e-6) {
    const double b0 = m.bias();
    m.set_bias(b0 + h, m.bias_accumulator());
    const double up = cross_entropy(m.predict(be), label);
    m.set_bias(b0 - h, m.bias_accumulator());
    const double down = cross_entropy(m.predict(be), label);
    m.set_bias(b0, m.bias_accumulator());
    return (up - down) / (2.0 * h);
}

// relative disagreement with a floor that keeps finite-difference rounding
// noise from dominating near-zero gradients
inline double rel_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-3});
    return std::abs(a - b) / denom;
}

}  // namespace acfilter::testutil
