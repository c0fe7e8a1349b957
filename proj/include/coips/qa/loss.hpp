#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "coips/tensor/ops.hpp"

namespace coips::qa {

using tensor::Shape;
using tensor::Tensor;

/// Inverse-frequency class weights: weight_i = sum(counts) / (K * counts_i).
struct ClassWeights {
    std::vector<double> weights;
    std::vector<std::size_t> counts;
};

inline ClassWeights class_weights(std::span<const std::size_t> counts) {
    if (counts.empty()) throw ConfigError("class_weights: no classes");
    ClassWeights cw;
    cw.counts.assign(counts.begin(), counts.end());
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    const double k = static_cast<double>(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0)
            throw ConfigError("class " + std::to_string(i) + " is absent from the training data");
        cw.weights.push_back(total / (k * static_cast<double>(counts[i])));
    }
    return cw;
}

inline ClassWeights class_weights(std::initializer_list<std::size_t> counts) {
    const std::vector<std::size_t> v(counts);
    return class_weights(std::span<const std::size_t>(v));
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Class-weighted cross-entropy over a batch: sum_i w_{y_i} * -log p_{i,y_i}
/// divided by sum_i w_{y_i}. Probabilities are floored at 1e-12 before the log.
template <class T>
Tensor<T> weighted_ce_loss(const Tensor<T>& logits, std::span<const int> labels, const ClassWeights& cw) {
    if (logits.rank() != 2) throw DimensionError("weighted_ce_loss: logits must be [N,K], got " + tensor::to_string(logits.shape()));
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw DimensionError("weighted_ce_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
    if (cw.weights.size() != k) throw DimensionError("weighted_ce_loss: weight count does not match class count");
    Tensor<T> selector(Shape{n, k});
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw RangeError("label " + std::to_string(labels[i]) + " outside [0," + std::to_string(k) + ")");
        const double w = cw.weights[static_cast<std::size_t>(labels[i])];
        selector[i * k + static_cast<std::size_t>(labels[i])] = static_cast<T>(w);
        weight_sum += w;
    }
    const auto logp = tensor::log_clamped(tensor::softmax(logits), static_cast<T>(kProbabilityFloor));
    return tensor::scale(tensor::sum(tensor::mul(selector, logp)), static_cast<T>(-1.0 / weight_sum));
}

template <class T>
Tensor<T> weighted_ce_loss(const Tensor<T>& logits, const std::vector<int>& labels, const ClassWeights& cw) {
    return weighted_ce_loss(logits, std::span<const int>(labels), cw);
}

}  // namespace coips::qa
