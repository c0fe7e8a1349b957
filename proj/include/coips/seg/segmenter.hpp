#pragma once

#include <string>

#include "coips/imaging/image.hpp"
#include "coips/nn/unet.hpp"
#include "coips/tensor/checkpoint.hpp"

namespace coips::seg {

using Network = nn::UNet<float>;

inline Network build_unet(const nn::UNetConfig& cfg) { return Network(cfg); }

inline imaging::ImageTensor preprocess(const imaging::ImageTensor& img, const nn::UNetConfig& cfg) {
    imaging::ImageTensor x = cfg.input_channels == 1 ? imaging::to_gray(img) : img;
    if (x.channels() != cfg.input_channels) throw DimensionError("segmenter expects " + std::to_string(cfg.input_channels) + " channels");
    x = imaging::resize(x, cfg.patch_h, cfg.patch_w);
    return imaging::zscore_normalize(x);
}

/// Per-pixel argmax of [2,H,W] (or [1,2,H,W]) logits; ties go to background.
inline imaging::FazMask mask_from_logits(const tensor::Tensor<float>& logits, const std::string& id = {}) {
    const std::size_t h = logits.dim(logits.rank() - 2), w = logits.dim(logits.rank() - 1);
    if (logits.numel() != 2 * h * w) throw DimensionError("mask_from_logits: expected two channels");
    imaging::FazMask m(h, w, id);
    for (std::size_t i = 0; i < h * w; ++i) m.pixels[i] = logits[h * w + i] > logits[i] ? 1 : 0;
    return m;
}

/// `img` is the preprocessed patch; the mask is mapped back to
/// (source_h, source_w) by nearest neighbour.
inline imaging::FazMask predict_mask(const Network& net, const imaging::ImageTensor& img, std::size_t source_h,
                                     std::size_t source_w) {
    const auto& cfg = net.config();
    if (img.channels() != cfg.input_channels || img.height() != cfg.patch_h || img.width() != cfg.patch_w)
        throw DimensionError("predict_mask: image is " + tensor::to_string(img.pixels.shape()) + ", patch is " +
                             std::to_string(cfg.patch_h) + "x" + std::to_string(cfg.patch_w));
    tensor::NoGradGuard guard;
    tensor::Tensor<float> x(tensor::Shape{1, img.channels(), img.height(), img.width()}, img.pixels.values());
    auto mask = mask_from_logits(net.forward(x), img.source_id);
    if (source_h != mask.height || source_w != mask.width) mask = imaging::resize_nearest(mask, source_h, source_w);
    return mask;
}

inline tensor::Checkpoint to_checkpoint(const Network& net) {
    return tensor::make_checkpoint(nn::to_json(net.config()).dump(), net.params());
}

inline Network from_checkpoint(const tensor::Checkpoint& ckpt) {
    const auto spec = nn::netspec_from_json(nn::json::parse(ckpt.netspec_json));
    if (!std::holds_alternative<nn::UNetConfig>(spec)) throw FormatError("checkpoint does not hold a U-Net");
    Network net(std::get<nn::UNetConfig>(spec));
    net.params().assign(ckpt.tensors);
    return net;
}

}  // namespace coips::seg
