#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>

namespace sbi {

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x) without overflow for large |x|.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// Binary cross entropy on the pre-sigmoid logit.
// loss = softplus(logit) - label*logit, grad = sigmoid(logit) - label.
inline std::pair<double, double> bce_with_logits(double logit, int label) {
    if (!std::isfinite(logit)) {
        throw std::invalid_argument("bce_with_logits: non-finite logit");
    }
    if (label != 0 && label != 1) {
        throw std::invalid_argument("bce_with_logits: label must be 0 or 1");
    }
    const double loss = softplus(logit) - static_cast<double>(label) * logit;
    const double grad = sigmoid(logit) - static_cast<double>(label);
    return {loss, grad};
}

// Max-shifted logSumExp.
inline double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;  // all -inf (or a +inf dominates)
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

}  // namespace sbi
