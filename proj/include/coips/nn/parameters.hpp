#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "coips/tensor/ops.hpp"
#include "coips/util/rng.hpp"

namespace coips::nn {

using tensor::LayerParams;
using tensor::Shape;
using tensor::Tensor;

/// A named tensor as stored in checkpoints ("<layer>.weight" / "<layer>.bias").
template <class T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;
};

/// Ordered collection of layer parameters with unique names.
template <class T>
class ParameterSet {
public:
    LayerParams<T>& add(LayerParams<T> layer) {
        if (!names_.insert(layer.name).second) throw SpecError("duplicate layer name: " + layer.name);
        layer.weight.set_requires_grad(true);
        if (layer.bias) layer.bias->set_requires_grad(true);
        layers_.push_back(std::move(layer));
        return layers_.back();
    }

    /// Conv weight [out,in,k,k] with He-uniform fan-in init and zero bias.
    LayerParams<T>& add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng) {
        Tensor<T> w(Shape{out, in, k, k});
        he_uniform(w, in * k * k, rng);
        return add({name, std::move(w), Tensor<T>(Shape{out})});
    }

    LayerParams<T>& add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
        Tensor<T> w(Shape{out, in});
        he_uniform(w, in, rng);
        return add({name, std::move(w), Tensor<T>(Shape{out})});
    }

    /// Instance-norm affine: weight = gamma (ones), bias = beta (zeros).
    LayerParams<T>& add_norm(const std::string& name, std::size_t channels) {
        return add({name, Tensor<T>(Shape{channels}, T(1)), Tensor<T>(Shape{channels})});
    }

    const std::vector<LayerParams<T>>& layers() const { return layers_; }
    std::vector<LayerParams<T>>& layers() { return layers_; }

    /// Flat list of trainable tensors, weight before bias per layer.
    std::vector<Tensor<T>> tensors() const {
        std::vector<Tensor<T>> out;
        for (const auto& l : layers_) {
            out.push_back(l.weight);
            if (l.bias) out.push_back(*l.bias);
        }
        return out;
    }

    std::vector<NamedTensor<T>> named_tensors() const {
        std::vector<NamedTensor<T>> out;
        for (const auto& l : layers_) {
            out.push_back({l.name + ".weight", l.weight});
            if (l.bias) out.push_back({l.name + ".bias", *l.bias});
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors()) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& l : layers_) {
            l.weight.zero_grad();
            if (l.bias) l.bias->zero_grad();
        }
    }

    /// Overwrites values from named tensors; names and shapes must match exactly.
    template <class U>
    void assign(const std::vector<NamedTensor<U>>& records) {
        auto mine = named_tensors();
        if (records.size() != mine.size())
            throw FormatError("checkpoint has " + std::to_string(records.size()) + " tensors, network expects " +
                              std::to_string(mine.size()));
        for (std::size_t i = 0; i < mine.size(); ++i) {
            if (records[i].name != mine[i].name)
                throw FormatError("checkpoint tensor '" + records[i].name + "' where '" + mine[i].name +
                                  "' was expected");
            if (records[i].value.shape() != mine[i].value.shape())
                throw FormatError("checkpoint tensor '" + records[i].name + "' has shape " +
                                  tensor::to_string(records[i].value.shape()));
            auto dst = mine[i].value.data();
            auto src = records[i].value.data();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(src[j]);
        }
    }

    static void he_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    }

private:
    std::vector<LayerParams<T>> layers_;
    std::unordered_set<std::string> names_;
};

}  // namespace coips::nn
