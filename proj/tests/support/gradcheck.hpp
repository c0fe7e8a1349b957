#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "coips/qa/loss.hpp"
#include "coips/seg/loss.hpp"
#include "coips/tensor/ops.hpp"
#include "coips/util/rng.hpp"

namespace coips::testing {

using tensor::Shape;
using Td = tensor::Tensor<double>;
using GradFn = std::function<Td(const std::vector<Td>&)>;

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;

inline Td random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Td t(shape);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Values with |x| >= margin, away from the kinks of relu-like ops.
inline Td kink_free_tensor(const Shape& shape, Rng& rng, double margin = 0.05) {
    Td t(shape);
    for (auto& v : t.data()) {
        const double m = rng.uniform(margin, 1.0);
        v = rng.bernoulli(0.5) ? m : -m;
    }
    return t;
}

/// Pairwise gaps of at least 0.01, so the max-pool argmax survives a step of h.
inline Td distinct_tensor(const Shape& shape, Rng& rng) {
    Td t(shape);
    std::vector<double> v(t.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i) - 0.005 * static_cast<double>(v.size());
    rng.shuffle(v.begin(), v.end());
    std::copy(v.begin(), v.end(), t.data().begin());
    return t;
}

/// Largest |analytic - numeric| / max(1, |numeric|) over every input entry.
/// `f` must return a scalar built from `inputs`.
inline double max_grad_error(std::vector<Td> inputs, const GradFn& f) {
    for (auto& x : inputs) x.set_requires_grad(true);
    Td loss = f(inputs);
    tensor::backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& x : inputs) {
        if (x.has_grad())
            analytic.emplace_back(x.grad().begin(), x.grad().end());
        else
            analytic.emplace_back(x.numel(), 0.0);
    }
    tensor::NoGradGuard guard;
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
            const double orig = inputs[i][j];
            inputs[i][j] = orig + kFdStep;
            const double up = f(inputs).item();
            inputs[i][j] = orig - kFdStep;
            const double down = f(inputs).item();
            inputs[i][j] = orig;
            const double numeric = (up - down) / (2.0 * kFdStep);
            worst = std::max(worst, std::abs(analytic[i][j] - numeric) / std::max(1.0, std::abs(numeric)));
        }
    }
    return worst;
}

/// Reduces a non-scalar output to a scalar through a fixed random projection.
inline Td project(const Td& y, std::uint64_t seed) {
    Rng rng(seed);
    return tensor::sum(tensor::mul(y, random_tensor(y.shape(), rng)));
}

struct GradCase {
    std::string op;
    std::vector<Td> inputs;
    GradFn f;
};

/// `per_op` random shape instances of every differentiable op and both losses.
inline std::vector<GradCase> gradient_cases(std::uint64_t seed, std::size_t per_op) {
    namespace t = tensor;
    std::vector<GradCase> cases;
    Rng rng(seed);
    auto dim = [&](std::size_t lo, std::size_t hi) { return static_cast<std::size_t>(lo + rng.below(hi - lo + 1)); };
    for (std::size_t r = 0; r < per_op; ++r) {
        const std::uint64_t ps = derive_seed(seed, r);
        const Shape s2{dim(1, 3), dim(1, 5)};
        const Shape s4{dim(1, 2), dim(1, 3), dim(2, 5), dim(2, 5)};
        cases.push_back({"add", {random_tensor(s2, rng), random_tensor(s2, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::add(x[0], x[1]), ps); }});
        cases.push_back({"sub", {random_tensor(s4, rng), random_tensor(s4, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::sub(x[0], x[1]), ps); }});
        cases.push_back({"mul", {random_tensor(s2, rng), random_tensor(s2, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::mul(x[0], x[1]), ps); }});
        cases.push_back({"div", {random_tensor(s2, rng), kink_free_tensor(s2, rng, 0.5)},
                         [ps](const std::vector<Td>& x) { return project(t::div(x[0], x[1]), ps); }});
        const double sc = rng.uniform(-2.0, 2.0);
        cases.push_back({"scale", {random_tensor(s4, rng)},
                         [ps, sc](const std::vector<Td>& x) { return project(t::scale(x[0], sc), ps); }});
        cases.push_back({"add_scalar", {random_tensor(s2, rng)},
                         [ps, sc](const std::vector<Td>& x) { return project(t::add_scalar(x[0], sc), ps); }});
        const Shape flat{s4[0] * s4[1], s4[2] * s4[3]};
        cases.push_back({"reshape", {random_tensor(s4, rng)},
                         [ps, flat](const std::vector<Td>& x) { return project(t::reshape(x[0], flat), ps); }});
        cases.push_back({"sum", {random_tensor(s4, rng)},
                         [](const std::vector<Td>& x) { return t::scale(t::sum(x[0]), 0.7); }});
        cases.push_back({"mean", {random_tensor(s2, rng)},
                         [](const std::vector<Td>& x) { return t::scale(t::mean(x[0]), -1.3); }});
        cases.push_back({"sum_per_sample", {random_tensor(s4, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::sum_per_sample(x[0]), ps); }});
        cases.push_back({"relu", {kink_free_tensor(s4, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::relu(x[0]), ps); }});
        const double slope = rng.uniform(0.01, 0.3);
        cases.push_back({"leaky_relu", {kink_free_tensor(s2, rng)},
                         [ps, slope](const std::vector<Td>& x) { return project(t::leaky_relu(x[0], slope), ps); }});
        cases.push_back({"log_clamped", {random_tensor(s2, rng, 0.1, 2.0)},
                         [ps](const std::vector<Td>& x) { return project(t::log_clamped(x[0], 1e-12), ps); }});
        const Shape classes = rng.bernoulli(0.5) ? Shape{dim(1, 3), dim(2, 5)} : Shape{dim(1, 2), dim(2, 3), dim(1, 3), dim(1, 3)};
        cases.push_back({"softmax", {random_tensor(classes, rng, -2.0, 2.0)},
                         [ps](const std::vector<Td>& x) { return project(t::softmax(x[0]), ps); }});

        const std::size_t k = rng.bernoulli(0.5) ? 3 : 1;
        const std::size_t stride = 1 + rng.below(2);
        const std::size_t pad = k == 3 ? rng.below(2) : 0;
        const std::size_t c_out = dim(1, 3);
        const auto conv_extent = [&] { return (dim(1, 3) - 1) * stride + k - 2 * pad; };
        const Shape xs{dim(1, 2), dim(1, 3), conv_extent(), conv_extent()};
        const bool with_bias = rng.bernoulli(0.5);
        cases.push_back({"conv2d",
                         {random_tensor(xs, rng), random_tensor(Shape{c_out, xs[1], k, k}, rng), random_tensor(Shape{c_out}, rng)},
                         [=](const std::vector<Td>& x) {
                             std::optional<Td> b;
                             if (with_bias) b = x[2];
                             return project(t::conv2d(x[0], x[1], b, stride, pad), ps);
                         }});
        const Shape ms{dim(1, 2), dim(1, 3), 2 * dim(1, 3), 2 * dim(1, 3)};
        cases.push_back({"maxpool2d", {distinct_tensor(ms, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::maxpool2d(x[0], 2, 2), ps); }});
        cases.push_back({"upsample2x", {random_tensor(s4, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::upsample2x(x[0]), ps); }});
        const Shape ns{dim(1, 2), dim(1, 3), dim(2, 4), dim(2, 4)};
        cases.push_back({"instance_norm",
                         {random_tensor(ns, rng), random_tensor(Shape{ns[1]}, rng, 0.5, 1.5), random_tensor(Shape{ns[1]}, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::instance_norm(x[0], x[1], x[2]), ps); }});
        const std::size_t n = dim(1, 4), f = dim(1, 6), o = dim(1, 4);
        cases.push_back({"linear",
                         {random_tensor(Shape{n, f}, rng), random_tensor(Shape{o, f}, rng), random_tensor(Shape{o}, rng)},
                         [ps](const std::vector<Td>& x) {
                             return project(t::linear(x[0], x[1], std::optional<Td>(x[2])), ps);
                         }});
        const Shape ca{s4[0], dim(1, 3), s4[2], s4[3]};
        cases.push_back({"concat_channels", {random_tensor(s4, rng), random_tensor(ca, rng)},
                         [ps](const std::vector<Td>& x) { return project(t::concat_channels(x[0], x[1]), ps); }});

        const std::size_t nb = dim(1, 6);
        std::vector<int> labels(nb);
        for (auto& l : labels) l = static_cast<int>(rng.below(3));
        const auto cw = qa::class_weights({1 + rng.below(20), 1 + rng.below(20), 1 + rng.below(20)});
        cases.push_back({"weighted_ce_loss", {random_tensor(Shape{nb, 3}, rng, -3.0, 3.0)},
                         [labels, cw](const std::vector<Td>& x) { return qa::weighted_ce_loss(x[0], labels, cw); }});

        const std::size_t bn = dim(1, 2), h = dim(2, 5), w = dim(2, 5);
        std::vector<imaging::FazMask> masks;
        for (std::size_t b = 0; b < bn; ++b) {
            imaging::FazMask m(h, w);
            for (auto& p : m.pixels) p = rng.bernoulli(0.4) ? 1 : 0;
            masks.push_back(std::move(m));
        }
        const double lambda = rng.uniform();
        cases.push_back({"combined_loss", {random_tensor(Shape{bn, 2, h, w}, rng, -2.0, 2.0)},
                         [masks, lambda](const std::vector<Td>& x) { return seg::combined_loss(x[0], masks, lambda); }});
    }
    return cases;
}

}  // namespace coips::testing
