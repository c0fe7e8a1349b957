#pragma once

#include <string>
#include <vector>

#include "coips/nn/netspec.hpp"
#include "coips/nn/parameters.hpp"

namespace coips::nn {

/// U-shaped encoder/decoder. Each encoder level runs two conv-norm-relu blocks
/// and halves the resolution with a 2x2 stride-2 max pool; each decoder level
/// upsamples (nearest neighbour + k×k conv), concatenates the skip, and runs
/// two conv-norm-relu blocks. A 1x1 conv emits background/foreground logits.
template <class T>
class UNet {
public:
    explicit UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(derive_seed(cfg_.seed, 0x0E7));
        const std::size_t k = cfg_.kernel;
        std::size_t in = cfg_.input_channels;
        for (std::size_t l = 0; l <= cfg_.poolings; ++l) {
            const std::size_t c = cfg_.channels_at(l);
            const std::string p = "enc" + std::to_string(l);
            params_.add_conv(p + ".conv1", in, c, k, rng);
            params_.add_norm(p + ".norm1", c);
            params_.add_conv(p + ".conv2", c, c, k, rng);
            params_.add_norm(p + ".norm2", c);
            in = c;
        }
        for (std::size_t l = cfg_.poolings; l-- > 0;) {
            const std::size_t c = cfg_.channels_at(l);
            const std::string p = "dec" + std::to_string(l);
            params_.add_conv(p + ".up", cfg_.channels_at(l + 1), c, k, rng);
            params_.add_conv(p + ".conv1", 2 * c, c, k, rng);
            params_.add_norm(p + ".norm1", c);
            params_.add_conv(p + ".conv2", c, c, k, rng);
            params_.add_norm(p + ".norm2", c);
        }
        params_.add_conv("head", cfg_.channels_at(0), 2, 1, rng);
    }

    /// x: [N, C, H, W] with H, W divisible by 2^poolings. Returns [N, 2, H, W].
    /// When `encoder_shapes` is given it receives the output shape of every
    /// encoder level; the last entry is the bottleneck.
    Tensor<T> forward(const Tensor<T>& x, std::vector<Shape>* encoder_shapes = nullptr) const {
        const std::size_t div = std::size_t{1} << cfg_.poolings;
        if (x.rank() != 4 || x.dim(1) != cfg_.input_channels || x.dim(2) % div != 0 || x.dim(3) % div != 0)
            throw DimensionError("unet input " + tensor::to_string(x.shape()) + " incompatible with " +
                                 std::to_string(cfg_.poolings) + " poolings");
        const auto& L = params_.layers();
        const std::size_t pad = cfg_.kernel / 2;
        std::size_t idx = 0;
        auto block = [&](Tensor<T> h) {
            h = tensor::conv2d(h, L[idx], 1, pad);
            h = tensor::instance_norm(h, L[idx + 1].weight, *L[idx + 1].bias);
            idx += 2;
            return tensor::relu(h);
        };
        std::vector<Tensor<T>> skips;
        Tensor<T> h = x;
        for (std::size_t l = 0; l <= cfg_.poolings; ++l) {
            h = block(h);
            h = block(h);
            if (encoder_shapes) encoder_shapes->push_back(h.shape());
            if (l < cfg_.poolings) {
                skips.push_back(h);
                h = tensor::maxpool2d(h, 2, 2);
            }
        }
        for (std::size_t l = cfg_.poolings; l-- > 0;) {
            h = tensor::conv2d(tensor::upsample2x(h), L[idx++], 1, pad);
            h = tensor::concat_channels(skips[l], h);
            h = block(h);
            h = block(h);
        }
        return tensor::conv2d(h, L[idx], 1, 0);
    }

    const UNetConfig& config() const { return cfg_; }
    ParameterSet<T>& params() { return params_; }
    const ParameterSet<T>& params() const { return params_; }

private:
    UNetConfig cfg_;
    ParameterSet<T> params_;
};

}  // namespace coips::nn
