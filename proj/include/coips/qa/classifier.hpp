#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>

#include "coips/imaging/image.hpp"
#include "coips/nn/classifier.hpp"
#include "coips/quality.hpp"
#include "coips/tensor/checkpoint.hpp"

namespace coips::qa {

using Network = nn::Classifier<float>;

inline Network build_classifier(const nn::ClassifierSpec& spec) { return Network(spec); }

/// Resize to the network input, match channel count, then z-score.
inline imaging::ImageTensor preprocess(const imaging::ImageTensor& img, const nn::ClassifierSpec& spec) {
    imaging::ImageTensor x = spec.input_channels == 1 ? imaging::to_gray(img) : img;
    if (x.channels() != spec.input_channels)
        throw DimensionError("classifier expects " + std::to_string(spec.input_channels) + " channels");
    x = imaging::resize(x, spec.input_size, spec.input_size);
    return imaging::zscore_normalize(x);
}

/// Argmax with ties resolved toward the lowest category index.
inline QualityLabel label_from_logits(std::span<const float> logits) {
    if (logits.size() != kNumQualityClasses) throw DimensionError("expected 3 logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    std::array<double, 3> p{};
    double z = 0.0;
    for (std::size_t i = 0; i < 3; ++i) z += p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    for (auto& v : p) v /= z;
    return {quality_from_index(best), p};
}

/// `img` must already be preprocessed to the network's input geometry.
inline QualityLabel predict_quality(const Network& net, const imaging::ImageTensor& img) {
    const auto& spec = net.spec();
    if (img.channels() != spec.input_channels || img.height() != spec.input_size || img.width() != spec.input_size)
        throw DimensionError("predict_quality: image is " + tensor::to_string(img.pixels.shape()) +
                             ", network expects [" + std::to_string(spec.input_channels) + "," +
                             std::to_string(spec.input_size) + "," + std::to_string(spec.input_size) + "]");
    tensor::NoGradGuard guard;
    tensor::Tensor<float> x(tensor::Shape{1, img.channels(), img.height(), img.width()}, img.pixels.values());
    const auto logits = net.forward(x);
    return label_from_logits(logits.data());
}

inline tensor::Checkpoint to_checkpoint(const Network& net) {
    return tensor::make_checkpoint(nn::to_json(net.spec()).dump(), net.params());
}

inline Network from_checkpoint(const tensor::Checkpoint& ckpt) {
    const auto spec = nn::netspec_from_json(nn::json::parse(ckpt.netspec_json));
    if (!std::holds_alternative<nn::ClassifierSpec>(spec)) throw FormatError("checkpoint does not hold a classifier");
    Network net(std::get<nn::ClassifierSpec>(spec));
    net.params().assign(ckpt.tensors);
    return net;
}

}  // namespace coips::qa
