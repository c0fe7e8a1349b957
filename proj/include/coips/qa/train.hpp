#pragma once

#include <array>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "coips/imaging/codec.hpp"
#include "coips/manifest.hpp"
#include "coips/qa/classifier.hpp"
#include "coips/qa/loss.hpp"
#include "coips/tensor/optim.hpp"
#include "coips/tensor/schedule.hpp"
#include "coips/util/csv.hpp"
#include "coips/util/rng.hpp"

namespace coips::qa {

struct TrainConfig {
    nn::ClassifierSpec net;
    std::size_t max_epochs = 60;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double t_max = 5;  // cosine half-period in epochs
    std::size_t patience = 20;
    bool augment = true;
    double hflip_probability = 0.5;
    double max_rotation_deg = 15.0;
    std::string train_split = "train";
    std::string val_split = "test";
    std::uint64_t seed = 42;
};

/// A decoded training example before augmentation/normalization: the raw
/// [0,1] raster already resized to the network input.
struct LabeledImage {
    imaging::ImageTensor image;
    int label = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predicted;
    std::vector<std::array<double, 3>> probs;
};

struct TrainResult {
    tensor::Checkpoint best;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    ClassWeights weights;
    std::vector<EpochLog> log;

    std::string log_csv() const {
        std::string out = "epoch,train_loss,val_loss,val_acc,lr\n";
        for (const auto& e : log)
            out += std::to_string(e.epoch) + "," + csv::fmt_exact(e.train_loss) + "," + csv::fmt_exact(e.val_loss) +
                   "," + csv::fmt_exact(e.val_acc) + "," + csv::fmt_exact(e.lr) + "\n";
        return out;
    }
};

inline std::vector<LabeledImage> load_split(const Manifest& m, const std::string& split, const nn::ClassifierSpec& spec) {
    std::vector<LabeledImage> out;
    for (const auto* row : m.in_split(split)) {
        if (!row->label) throw ConfigError("manifest row " + row->source_id + " has no class label");
        auto img = imaging::load_image(m.resolve(row->image_path), row->field_mm, row->source_id);
        img = spec.input_channels == 1 ? imaging::to_gray(img) : img;
        img = imaging::resize(img, spec.input_size, spec.input_size);
        out.push_back({std::move(img), static_cast<int>(*row->label)});
    }
    return out;
}

namespace detail {

inline tensor::Tensor<float> stack(const std::vector<imaging::ImageTensor>& images) {
    const auto& first = images.front().pixels.shape();
    tensor::Tensor<float> x(tensor::Shape{images.size(), first[0], first[1], first[2]});
    const std::size_t per = images.front().pixels.numel();
    for (std::size_t i = 0; i < images.size(); ++i)
        std::copy(images[i].pixels.values().begin(), images[i].pixels.values().end(), x.values().begin() + i * per);
    return x;
}

}  // namespace detail

/// Random horizontal flip and rotation, drawn from `rng`.
inline imaging::ImageTensor augment(const imaging::ImageTensor& img, Rng& rng, double flip_p, double max_deg) {
    const bool flip = rng.bernoulli(flip_p);
    const double angle = rng.uniform(-max_deg, max_deg);
    imaging::ImageTensor out = flip ? imaging::hflip(img) : img;
    return imaging::rotate(out, angle);
}

/// Loss and accuracy of clean (unaugmented) images, evaluated in fixed order.
inline Evaluation evaluate(const Network& net, const std::vector<LabeledImage>& data, const ClassWeights& cw,
                           std::size_t batch_size = 32) {
    tensor::NoGradGuard guard;
    Evaluation ev;
    double loss_sum = 0.0, weight_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        std::vector<imaging::ImageTensor> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(imaging::zscore_normalize(data[i].image));
        const auto logits = net.forward(detail::stack(batch));
        for (std::size_t i = start; i < end; ++i) {
            const auto row = logits.data().subspan((i - start) * 3, 3);
            const auto label = label_from_logits(row);
            const int y = data[i].label;
            const double w = cw.weights[static_cast<std::size_t>(y)];
            loss_sum += -w * std::log(std::max((*label.probs)[static_cast<std::size_t>(y)], kProbabilityFloor));
            weight_sum += w;
            ev.predicted.push_back(static_cast<int>(label.category));
            ev.probs.push_back(*label.probs);
            if (static_cast<int>(label.category) == y) ++correct;
        }
    }
    ev.loss = weight_sum > 0 ? loss_sum / weight_sum : 0.0;
    ev.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
    return ev;
}

/// Weighted-CE training with Adam and cosine annealing; early stopping on
/// validation loss. Returns the checkpoint with the lowest validation loss.
inline TrainResult train_classifier(const std::vector<LabeledImage>& train, const std::vector<LabeledImage>& val,
                                    const TrainConfig& cfg) {
    cfg.net.validate();
    if (train.empty() || val.empty()) throw ConfigError("training and validation splits must be non-empty");
    if (cfg.batch_size == 0 || cfg.max_epochs == 0) throw ConfigError("batch_size and max_epochs must be positive");
    std::array<std::size_t, 3> counts{};
    for (const auto& s : train) ++counts.at(static_cast<std::size_t>(s.label));
    for (std::size_t c = 0; c < 3; ++c)
        if (counts[c] == 0)
            throw ConfigError(std::string("training split has no '") + to_string(quality_from_index(c)) + "' images");

    TrainResult result;
    result.weights = class_weights(std::span<const std::size_t>(counts));
    Network net(cfg.net);
    auto params = net.params().tensors();
    auto opt = tensor::OptimizerState<float>::adam(cfg.lr);
    if (!(cfg.t_max > 0)) throw ConfigError("t_max must be positive");
    const tensor::LrSchedule schedule = tensor::CosineAnnealing{cfg.t_max, 0.0};

    std::optional<double> best;
    std::size_t since_best = 0;
    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // past t_max the cosine rises again: reflect into [0, t_max]
        const double phase = std::fmod(static_cast<double>(epoch), 2.0 * cfg.t_max);
        const double t = cfg.t_max - std::abs(phase - cfg.t_max);
        const double lr = cfg.lr > 0 ? tensor::learning_rate(schedule, cfg.lr, t) : 0.0;
        opt.lr = lr;
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, 0x0DE7, epoch));
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<imaging::ImageTensor> images;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = train[order[i]];
                Rng aug_rng(derive_seed(cfg.seed, 0xA06, epoch, order[i]));
                auto x = imaging::zscore_normalize(s.image);
                // zero fill from rotation lands on the image mean
                images.push_back(cfg.augment ? augment(x, aug_rng, cfg.hflip_probability, cfg.max_rotation_deg) : x);
                labels.push_back(s.label);
            }
            net.params().zero_grad();
            tensor::Tensor<float> loss;
            try {
                loss = weighted_ce_loss(net.forward(detail::stack(images)), labels, result.weights);
                tensor::backward(loss);
            } catch (const NumericError& e) {
                throw NumericError("classifier training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            tensor::adam_step(std::span<tensor::Tensor<float>>(params), opt);
            loss_total += loss.item();
            ++batches;
        }
        const auto ev = evaluate(net, val, result.weights);
        result.log.push_back({epoch, loss_total / static_cast<double>(batches), ev.loss, ev.accuracy, lr});
        if (!best || ev.loss < *best) {
            best = ev.loss;
            since_best = 0;
            result.best = to_checkpoint(net);
            result.best_epoch = epoch;
            result.best_val_loss = ev.loss;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

inline TrainResult train_classifier(const Manifest& manifest, const TrainConfig& cfg) {
    const auto train = load_split(manifest, cfg.train_split, cfg.net);
    const auto val = load_split(manifest, cfg.val_split, cfg.net);
    return train_classifier(train, val, cfg);
}

}  // namespace coips::qa
