#pragma once

#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "coips/imaging/codec.hpp"
#include "coips/manifest.hpp"
#include "coips/metrics/segmentation.hpp"
#include "coips/pipeline/split.hpp"
#include "coips/seg/loss.hpp"
#include "coips/seg/segmenter.hpp"
#include "coips/tensor/optim.hpp"
#include "coips/tensor/schedule.hpp"
#include "coips/util/csv.hpp"
#include "coips/util/parallel.hpp"

namespace coips::seg {

struct TrainConfig {
    nn::UNetConfig net;
    std::size_t folds = 5;
    std::size_t max_epochs = 10;
    std::size_t batch_size = 8;
    double lr = 0.01;
    double momentum = 0.99;
    double poly_exponent = 0.9;
    std::size_t patience = 20;
    bool augment = true;  // horizontal flip of image and mask
    std::string split = "train";
    std::size_t max_samples = 0;  // 0 keeps every eligible sample
    std::size_t threads = 1;      // folds trained concurrently
    std::uint64_t seed = 42;
};

/// Preprocessed patch with its mask at patch resolution.
struct SegSample {
    std::string id;
    imaging::ImageTensor image;
    FazMask mask;
};

struct FoldEpoch {
    std::size_t fold = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_dice = 0.0;
    double lr = 0.0;
};

struct FoldResult {
    std::size_t fold = 0;
    std::vector<std::string> val_ids;
    std::vector<FoldEpoch> log;
    tensor::Checkpoint best;
    double best_dice = -1.0;
    std::size_t best_epoch = 0;
};

struct TrainResult {
    std::vector<FoldResult> folds;
    std::size_t best_fold = 0;

    const tensor::Checkpoint& best() const { return folds.at(best_fold).best; }
    double best_dice() const { return folds.at(best_fold).best_dice; }

    std::string log_csv() const {
        std::string out = "fold,epoch,train_loss,val_dice,lr\n";
        for (const auto& f : folds)
            for (const auto& e : f.log)
                out += std::to_string(e.fold) + "," + std::to_string(e.epoch) + "," + csv::fmt_exact(e.train_loss) + "," +
                       csv::fmt_exact(e.val_dice) + "," + csv::fmt_exact(e.lr) + "\n";
        return out;
    }
};

/// Gradable and Outstanding rows of `split` that carry a mask.
inline std::vector<SegSample> load_samples(const Manifest& m, const TrainConfig& cfg) {
    std::vector<SegSample> out;
    for (const auto* row : m.in_split(cfg.split)) {
        if (row->mask_path.empty()) continue;
        if (row->label && *row->label == Quality::Ungradable) continue;
        const auto img = imaging::load_image(m.resolve(row->image_path), row->field_mm, row->source_id);
        auto mask = imaging::decode_mask_png(imaging::read_file(m.resolve(row->mask_path)), row->source_id);
        if (mask.height != img.height() || mask.width != img.width())
            throw FormatError("mask of " + row->source_id + " does not match its image size");
        if (mask.height != cfg.net.patch_h || mask.width != cfg.net.patch_w)
            mask = imaging::resize_nearest(mask, cfg.net.patch_h, cfg.net.patch_w);
        out.push_back({row->source_id, preprocess(img, cfg.net), std::move(mask)});
        if (cfg.max_samples && out.size() == cfg.max_samples) break;
    }
    return out;
}

/// Mean smoothed Dice of argmax predictions over `data`.
inline double validation_dice(const Network& net, const std::vector<SegSample>& data,
                              const std::vector<std::size_t>& idx) {
    double total = 0.0;
    for (auto i : idx) {
        const auto& s = data[i];
        total += metrics::dice_coefficient(predict_mask(net, s.image, s.mask.height, s.mask.width), s.mask);
    }
    return idx.empty() ? 0.0 : total / static_cast<double>(idx.size());
}

inline FoldResult train_fold(const std::vector<SegSample>& data, const std::vector<std::size_t>& train_idx,
                             const std::vector<std::size_t>& val_idx, std::size_t fold, const TrainConfig& cfg) {
    FoldResult res;
    res.fold = fold;
    for (auto i : val_idx) res.val_ids.push_back(data[i].id);
    Network net(cfg.net);
    auto params = net.params().tensors();
    auto opt = tensor::OptimizerState<float>::sgd_nesterov(cfg.lr, cfg.momentum);
    const tensor::LrSchedule schedule = tensor::PolyDecay{static_cast<double>(cfg.max_epochs), cfg.poly_exponent};
    const std::size_t plane = cfg.net.input_channels * cfg.net.patch_h * cfg.net.patch_w;
    std::size_t since_best = 0;
    std::vector<std::size_t> order = train_idx;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = cfg.lr > 0 ? tensor::learning_rate(schedule, cfg.lr, static_cast<double>(epoch)) : 0.0;
        opt.lr = lr;
        order = train_idx;
        Rng rng(derive_seed(cfg.seed, 0x5E6, fold, epoch));
        rng.shuffle(order.begin(), order.end());
        double loss_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            tensor::Tensor<float> x(tensor::Shape{end - start, cfg.net.input_channels, cfg.net.patch_h, cfg.net.patch_w});
            std::vector<FazMask> masks;
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = data[order[i]];
                const bool flip = cfg.augment && rng.bernoulli(0.5);
                const auto& img = flip ? imaging::hflip(s.image) : s.image;
                std::copy(img.pixels.values().begin(), img.pixels.values().end(), x.values().begin() + (i - start) * plane);
                masks.push_back(flip ? imaging::hflip(s.mask) : s.mask);
            }
            net.params().zero_grad();
            tensor::Tensor<float> loss;
            try {
                loss = combined_loss(net.forward(x), masks, cfg.net.lambda);
                tensor::backward(loss);
            } catch (const NumericError& e) {
                throw NumericError("segmenter fold " + std::to_string(fold) + " diverged at epoch " +
                                   std::to_string(epoch) + ": " + e.what());
            }
            tensor::sgd_nesterov_step(std::span<tensor::Tensor<float>>(params), opt);
            loss_total += loss.item();
            ++batches;
        }
        const double dice = validation_dice(net, data, val_idx);
        res.log.push_back({fold, epoch, loss_total / static_cast<double>(std::max<std::size_t>(batches, 1)), dice, lr});
        if (dice > res.best_dice) {
            res.best_dice = dice;
            res.best_epoch = epoch;
            res.best = to_checkpoint(net);
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return res;
}

/// K-fold training over the eligible ids; the fold with the highest
/// validation Dice supplies the returned checkpoint.
inline TrainResult train_segmenter(const std::vector<SegSample>& data, const TrainConfig& cfg) {
    cfg.net.validate();
    if (cfg.batch_size == 0 || cfg.max_epochs == 0) throw ConfigError("batch_size and max_epochs must be positive");
    if (data.size() < cfg.folds)
        throw ConfigError("need at least " + std::to_string(cfg.folds) + " masked samples for " +
                          std::to_string(cfg.folds) + "-fold training, found " + std::to_string(data.size()));
    std::vector<std::string> ids;
    for (const auto& s : data) ids.push_back(s.id);
    const auto split = pipeline::split_dataset(ids, pipeline::KFoldScheme{cfg.folds}, cfg.seed);
    TrainResult result;
    result.folds.resize(cfg.folds);
    parallel_for(cfg.folds, resolve_threads(cfg.threads), [&](std::size_t fold) {
        std::vector<std::size_t> train_idx, val_idx;
        for (std::size_t i = 0; i < data.size(); ++i) (split.fold[i] == fold ? val_idx : train_idx).push_back(i);
        result.folds[fold] = train_fold(data, train_idx, val_idx, fold, cfg);
    });
    for (std::size_t f = 1; f < result.folds.size(); ++f)
        if (result.folds[f].best_dice > result.folds[result.best_fold].best_dice) result.best_fold = f;
    return result;
}

inline TrainResult train_segmenter(const Manifest& manifest, const TrainConfig& cfg) {
    return train_segmenter(load_samples(manifest, cfg), cfg);
}

}  // namespace coips::seg
