#pragma once

#include <algorithm>
#include <cmath>

namespace acfilter {

// Predictions are clamped into [kProbFloor, 1 - kProbFloor] before any log
// is taken, keeping both losses finite.
inline constexpr double kProbFloor = 1e-12;

inline double clamp_probability(double p) {
    return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

// Numerically stable logistic: never overflows, saturates smoothly at the
// ends of the double range.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// -(1-y) ln(1-p) - y ln(p), with p clamped. y is the binary click indicator.
inline double logloss(double p, double y) {
    p = clamp_probability(p);
    return -y * std::log(p) - (1.0 - y) * std::log1p(-p);
}

// Binary cross-entropy against a probability label l in [0, 1]:
//   l ln(l/p) + (1-l) ln((1-l)/(1-p)),  with 0 ln 0 = 0.
// Written as l (ln l - ln p) so that at binary labels it evaluates to the
// exact same expression as logloss. The result is clamped at zero; the true
// value is non-negative and only rounding can push it below.
inline double cross_entropy(double p, double label) {
    p = clamp_probability(p);
    double v = 0.0;
    if (label > 0.0) {
        v += label * (std::log(label) - std::log(p));
    }
    if (label < 1.0) {
        v += (1.0 - label) * (std::log1p(-label) - std::log1p(-p));
    }
    return std::max(v, 0.0);
}

// Loss plus its derivative with respect to the pre-sigmoid score. For the
// cross-entropy of p = sigmoid(s) against label l the derivative is p - l;
// at binary labels this is the familiar logloss gradient.
struct LossValue {
    double value = 0.0;
    double gradient_wrt_score = 0.0;
};

inline LossValue cross_entropy_with_grad(double p, double label) {
    return LossValue{cross_entropy(p, label), clamp_probability(p) - label};
}

}  // namespace acfilter
