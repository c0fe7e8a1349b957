#pragma once

#include <string>

#include "coips/nn/netspec.hpp"
#include "coips/nn/parameters.hpp"

namespace coips::nn {

/// Quality classifier: [conv -> instance norm -> relu -> maxpool 2] per stage,
/// then a linear head producing one logit per quality category.
template <class T>
class Classifier {
public:
    explicit Classifier(ClassifierSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        Rng rng(derive_seed(spec_.seed, 0xC1A55));
        std::size_t in = spec_.input_channels;
        for (std::size_t s = 0; s < spec_.stage_channels.size(); ++s) {
            const std::size_t out = spec_.stage_channels[s];
            params_.add_conv("stage" + std::to_string(s) + ".conv", in, out, spec_.kernel, rng);
            params_.add_norm("stage" + std::to_string(s) + ".norm", out);
            in = out;
        }
        const std::size_t f = spec_.feature_size();
        params_.add_linear("head", in * f * f, spec_.num_classes, rng);
    }

    /// x: [N, C, S, S] with S = input_size. Returns logits [N, num_classes].
    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.dim(1) != spec_.input_channels || x.dim(2) != spec_.input_size ||
            x.dim(3) != spec_.input_size)
            throw DimensionError("classifier expects [N," + std::to_string(spec_.input_channels) + "," +
                                 std::to_string(spec_.input_size) + "," + std::to_string(spec_.input_size) +
                                 "], got " + tensor::to_string(x.shape()));
        const auto& layers = params_.layers();
        const std::size_t pad = spec_.kernel / 2;
        Tensor<T> h = x;
        for (std::size_t s = 0; s < spec_.stage_channels.size(); ++s) {
            const auto& conv = layers[2 * s];
            const auto& norm = layers[2 * s + 1];
            h = tensor::conv2d(h, conv, 1, pad);
            h = tensor::instance_norm(h, norm.weight, *norm.bias);
            h = tensor::relu(h);
            h = tensor::maxpool2d(h, 2, 2);
        }
        const std::size_t n = h.dim(0);
        h = tensor::reshape(h, Shape{n, h.numel() / n});
        const auto& head = layers.back();
        return tensor::linear(h, head.weight, head.bias);
    }

    const ClassifierSpec& spec() const { return spec_; }
    ParameterSet<T>& params() { return params_; }
    const ParameterSet<T>& params() const { return params_; }

private:
    ClassifierSpec spec_;
    ParameterSet<T> params_;
};

}  // namespace coips::nn
