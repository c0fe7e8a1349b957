#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coips/tensor/tensor.hpp"

namespace coips::tensor {

enum class OptimizerKind { SgdNesterov, Adam };

/// Hyperparameters plus per-parameter auxiliary buffers. For SgdNesterov
/// `first` holds the velocity; for Adam `first`/`second` hold the moments.
template <class T>
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double momentum = 0.99;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<std::vector<T>> first;
    std::vector<std::vector<T>> second;
    std::uint64_t step_count = 0;

    static OptimizerState sgd_nesterov(double lr, double momentum = 0.99) {
        OptimizerState s;
        s.kind = OptimizerKind::SgdNesterov;
        s.lr = lr;
        s.momentum = momentum;
        return s;
    }

    static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        OptimizerState s;
        s.kind = OptimizerKind::Adam;
        s.lr = lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.eps = eps;
        return s;
    }
};

namespace detail {

template <class T>
void prepare_buffers(std::vector<std::vector<T>>& buffers, std::span<Tensor<T>> params) {
    if (buffers.empty()) {
        buffers.reserve(params.size());
        for (const auto& p : params) buffers.emplace_back(p.numel(), T(0));
        return;
    }
    if (buffers.size() != params.size())
        throw DimensionError("optimizer state tracks " + std::to_string(buffers.size()) + " parameters, got " +
                             std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (buffers[i].size() != params[i].numel())
            throw DimensionError("optimizer buffer " + std::to_string(i) + " does not match parameter shape " +
                                 to_string(params[i].shape()));
}

template <class T>
void check_state(const OptimizerState<T>& s, OptimizerKind expected) {
    if (s.kind != expected) throw ContractError("optimizer state has the wrong kind");
    if (!(s.lr >= 0.0)) throw ContractError("learning rate must be non-negative");
}

}  // namespace detail

/// Nesterov momentum: v <- mu*v - lr*g; p <- p + mu*v - lr*g.
template <class T>
void sgd_nesterov_step(std::span<Tensor<T>> params, OptimizerState<T>& state) {
    detail::check_state(state, OptimizerKind::SgdNesterov);
    detail::prepare_buffers(state.first, params);
    const T mu = static_cast<T>(state.momentum);
    const T lr = static_cast<T>(state.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.has_grad()) continue;
        auto values = p.data();
        auto grad = p.grad();
        auto& v = state.first[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = mu * v[j] - lr * grad[j];
            values[j] += mu * v[j] - lr * grad[j];
        }
    }
    ++state.step_count;
}

/// Bias-corrected Adam.
template <class T>
void adam_step(std::span<Tensor<T>> params, OptimizerState<T>& state) {
    detail::check_state(state, OptimizerKind::Adam);
    detail::prepare_buffers(state.first, params);
    detail::prepare_buffers(state.second, params);
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta1, t)));
    const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta2, t)));
    const T lr = static_cast<T>(state.lr);
    const T eps = static_cast<T>(state.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.has_grad()) continue;
        auto values = p.data();
        auto grad = p.grad();
        auto& m = state.first[i];
        auto& v = state.second[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * grad[j];
            v[j] = b2 * v[j] + (T(1) - b2) * grad[j] * grad[j];
            const T mhat = m[j] * c1;
            const T vhat = v[j] * c2;
            values[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template <class T>
void optimizer_step(std::span<Tensor<T>> params, OptimizerState<T>& state) {
    if (state.kind == OptimizerKind::Adam)
        adam_step(params, state);
    else
        sgd_nesterov_step(params, state);
}

}  // namespace coips::tensor
