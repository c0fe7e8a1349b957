#include <gtest/gtest.h>

#include <cmath>

#include "coips/qa/classifier.hpp"
#include "coips/qa/loss.hpp"
#include "coips/qa/train.hpp"
#include "coips/synth/synthgen.hpp"

using namespace coips;
using namespace coips::qa;
using tensor::Shape;
using tensor::Tensor;

namespace {

using Td = Tensor<double>;

/// Logits whose softmax puts probability `p` on class `y` of K = 2.
std::array<double, 2> logits_for(double p) { return {std::log(p), std::log(1 - p)}; }

std::vector<LabeledImage> toy_images(std::size_t per_class, std::size_t offset) {
    synth::SynthSpec spec;
    std::vector<LabeledImage> out;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < per_class; ++i)
            out.push_back({synth::generate_sample(spec, quality_from_index(c), offset + i).image, static_cast<int>(c)});
    return out;
}

}  // namespace

TEST(ClassWeights, Balanced) {
    const auto cw = class_weights({50, 50, 50});
    for (double w : cw.weights) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(ClassWeights, HandChecked) {
    const auto cw = class_weights({70, 20, 10});
    EXPECT_NEAR(cw.weights[0], 0.47619, 5e-6);
    EXPECT_NEAR(cw.weights[1], 1.66667, 5e-6);
    EXPECT_NEAR(cw.weights[2], 3.33333, 5e-6);
}

TEST(ClassWeights, ScaleInvariantAndBalancedProduct) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> counts(2 + rng.below(5));
        std::size_t total = 0;
        for (auto& c : counts) total += c = 1 + rng.below(1000);
        const auto a = class_weights(std::span<const std::size_t>(counts));
        for (auto& c : counts) c *= 2;
        const auto b = class_weights(std::span<const std::size_t>(counts));
        const double target = static_cast<double>(total) / static_cast<double>(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            EXPECT_NEAR(a.weights[i], b.weights[i], 1e-15);
            EXPECT_NEAR(static_cast<double>(counts[i] / 2) * a.weights[i], target, 1e-9 * target);
        }
    }
}

TEST(ClassWeights, AbsentClassIsConfigError) { EXPECT_THROW(class_weights({5, 0, 3}), ConfigError); }

TEST(WeightedCe, HandCheckedBatch) {
    const auto l0 = logits_for(0.8), l1 = logits_for(0.5);
    const Td logits(Shape{2, 2}, {l0[0], l0[1], l1[0], l1[1]});
    ClassWeights cw{{0.5, 2.0}, {4, 1}};
    const double loss = weighted_ce_loss(logits, std::vector<int>{0, 0}, ClassWeights{{0.5, 0.5}, {1, 1}}).item();
    EXPECT_NEAR(loss, -(std::log(0.8) + std::log(0.5)) / 2, 1e-12);
    const Td swapped(Shape{2, 2}, {l0[0], l0[1], l1[1], l1[0]});
    EXPECT_NEAR(weighted_ce_loss(swapped, std::vector<int>{0, 1}, cw).item(), 0.59915, 5e-6);
    EXPECT_NEAR(weighted_ce_loss(swapped, std::vector<int>{0, 1}, cw).item(),
                (0.5 * -std::log(0.8) + 2.0 * -std::log(0.5)) / 2.5, 1e-12);
}

TEST(WeightedCe, PerfectPredictionIsZero) {
    const Td logits(Shape{2, 3}, {60, 0, 0, 0, 0, 60});
    EXPECT_NEAR(weighted_ce_loss(logits, std::vector<int>{0, 2}, class_weights({1, 2, 3})).item(), 0.0, 1e-20);
}

TEST(WeightedCe, UniformWeightsGiveMeanCrossEntropy) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        Td logits(Shape{n, 3});
        for (auto& v : logits.data()) v = rng.uniform(-4, 4);
        std::vector<int> y(n);
        for (auto& v : y) v = static_cast<int>(rng.below(3));
        double ce = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = 0;
            for (int k = 0; k < 3; ++k) z += std::exp(logits[i * 3 + k]);
            ce += -(logits[i * 3 + y[i]] - std::log(z));
        }
        EXPECT_NEAR(weighted_ce_loss(logits, y, class_weights({1, 1, 1})).item(), ce / n, 1e-12);
        EXPECT_GE(weighted_ce_loss(logits, y, class_weights({1, 5, 9})).item(), 0.0);
    }
}

TEST(WeightedCe, ExtremeLogitsStayFinite) {
    const Td logits(Shape{1, 3}, {0, 800, 0});
    const double loss = weighted_ce_loss(logits, std::vector<int>{0}, class_weights({1, 1, 1})).item();
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_NEAR(loss, -std::log(1e-12), 1e-9);
}

TEST(WeightedCe, BadLabelsAndShapes) {
    const Td logits(Shape{2, 3});
    const auto cw = class_weights({1, 1, 1});
    EXPECT_THROW(weighted_ce_loss(logits, std::vector<int>{0, 3}, cw), RangeError);
    EXPECT_THROW(weighted_ce_loss(logits, std::vector<int>{0}, cw), DimensionError);
    EXPECT_THROW(weighted_ce_loss(logits, std::vector<int>{0, 1}, class_weights({1, 1})), DimensionError);
}

TEST(Classifier, DefaultLogitShape) {
    const auto net = build_classifier({});
    tensor::NoGradGuard guard;
    const auto y = net.forward(Tensor<float>(Shape{5, 1, 64, 64}, 0.1f));
    EXPECT_EQ(y.shape(), (Shape{5, 3}));
}

TEST(Classifier, ZeroHeadGivesUniformProbabilities) {
    auto net = build_classifier({});
    auto& head = net.params().layers().back();
    for (auto& v : head.weight.data()) v = 0;
    for (auto& v : head.bias->data()) v = 0;
    Rng rng(3);
    auto img = imaging::make_image(1, 64, 64);
    for (auto& v : img.pixels.data()) v = static_cast<float>(rng.uniform());
    const auto q = predict_quality(net, preprocess(img, net.spec()));
    for (double p : *q.probs) EXPECT_NEAR(p, 1.0 / 3, 1e-12);
    EXPECT_EQ(q.category, Quality::Ungradable);
}

TEST(Classifier, ParameterCountClosedForm) {
    for (const nn::ClassifierSpec& spec : {nn::ClassifierSpec{}, nn::ClassifierSpec{3, 32, {4, 6}, 5, 3, 1}}) {
        std::size_t expected = 0, in = spec.input_channels;
        for (auto c : spec.stage_channels) {
            expected += c * in * spec.kernel * spec.kernel + c + 2 * c;
            in = c;
        }
        const std::size_t f = spec.input_size >> spec.stage_channels.size();
        expected += in * f * f * 3 + 3;
        EXPECT_EQ(build_classifier(spec).params().parameter_count(), expected);
    }
    EXPECT_EQ(build_classifier({}).params().parameter_count(), 27'699u);
}

TEST(Classifier, InconsistentSpecIsSpecError) {
    nn::ClassifierSpec s;
    s.num_classes = 4;
    EXPECT_THROW(build_classifier(s), SpecError);
    s = {};
    s.input_size = 60;
    EXPECT_THROW(build_classifier(s), SpecError);
    s = {};
    s.kernel = 4;
    EXPECT_THROW(build_classifier(s), SpecError);
}

TEST(Predict, ArgmaxAndProbability) {
    const float logits[] = {5, 0, 0};
    const auto q = label_from_logits(logits);
    EXPECT_EQ(q.category, Quality::Ungradable);
    EXPECT_GT((*q.probs)[0], 0.98);
}

TEST(Predict, TiesGoToLowestIndex) {
    const float equal[] = {1, 1, 1};
    EXPECT_EQ(label_from_logits(equal).category, Quality::Ungradable);
    const float upper[] = {0, 2, 2};
    EXPECT_EQ(label_from_logits(upper).category, Quality::Gradable);
}

TEST(Predict, ShiftAndMonotoneInvariance) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        float l[3], shifted[3], cubed[3];
        const float c = static_cast<float>(rng.uniform(-50, 50));
        for (int i = 0; i < 3; ++i) {
            l[i] = static_cast<float>(rng.uniform(-3, 3));
            shifted[i] = l[i] + c;
            cubed[i] = l[i] * l[i] * l[i];
        }
        const auto a = label_from_logits(l);
        EXPECT_EQ(a.category, label_from_logits(shifted).category);
        EXPECT_EQ(a.category, label_from_logits(cubed).category);
        double s = 0;
        for (double p : *a.probs) s += p;
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Predict, WrongGeometryIsDimensionError) {
    const auto net = build_classifier({});
    EXPECT_THROW(predict_quality(net, imaging::make_image(1, 32, 32)), DimensionError);
    EXPECT_THROW(label_from_logits(std::vector<float>{1, 2}), DimensionError);
}

TEST(Predict, PreprocessResizesAndNormalizes) {
    auto img = imaging::make_image(3, 100, 80);
    Rng rng(5);
    for (auto& v : img.pixels.data()) v = static_cast<float>(rng.uniform());
    const auto x = preprocess(img, nn::ClassifierSpec{});
    EXPECT_EQ(x.pixels.shape(), (Shape{1, 64, 64}));
    double m = 0;
    for (float v : x.pixels.data()) m += v;
    EXPECT_NEAR(m / 4096, 0.0, 1e-5);
}

TEST(Training, ToyRunBookkeeping) {
    auto all = toy_images(2, 0);
    all.push_back(toy_images(1, 200)[0]);
    const auto val = toy_images(1, 100);
    ASSERT_EQ(all.size() + val.size(), 10u);
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.batch_size = 4;
    const auto res = train_classifier(all, val, cfg);
    ASSERT_EQ(res.log.size(), 2u);
    EXPECT_EQ(res.log[0].epoch, 0u);
    EXPECT_EQ(res.log[1].epoch, 1u);
    const auto csv = res.log_csv();
    const auto csv_lines = std::count(csv.begin(), csv.end(), '\n');
    EXPECT_EQ(csv_lines, 3);

    const auto decoded = tensor::decode_checkpoint(tensor::encode_checkpoint(res.best));
    const auto net = from_checkpoint(decoded);
    const auto ev = evaluate(net, val, res.weights);
    EXPECT_EQ(ev.loss, res.best_val_loss);
    EXPECT_EQ(ev.loss, res.log[res.best_epoch].val_loss);
}

TEST(Training, BestCheckpointHasMinimumValidationLoss) {
    TrainConfig cfg;
    cfg.max_epochs = 4;
    cfg.batch_size = 8;
    const auto res = train_classifier(toy_images(4, 0), toy_images(2, 100), cfg);
    double lowest = res.log[0].val_loss;
    for (const auto& e : res.log) lowest = std::min(lowest, e.val_loss);
    EXPECT_EQ(res.best_val_loss, lowest);
    EXPECT_EQ(res.log[res.best_epoch].val_loss, lowest);
}

TEST(Training, EarlyStoppingHonoursPatience) {
    TrainConfig cfg;
    cfg.max_epochs = 10;
    cfg.batch_size = 8;
    cfg.lr = 0.0;
    cfg.patience = 2;
    const auto res = train_classifier(toy_images(2, 0), toy_images(1, 100), cfg);
    EXPECT_EQ(res.log.size(), 3u);
    EXPECT_EQ(res.best_epoch, 0u);
}

TEST(Training, ZeroLearningRateFreezesMetrics) {
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 4;
    cfg.lr = 0.0;
    const auto res = train_classifier(toy_images(2, 0), toy_images(1, 100), cfg);
    for (const auto& e : res.log) {
        EXPECT_EQ(e.val_loss, res.log[0].val_loss);
        EXPECT_EQ(e.val_acc, res.log[0].val_acc);
        EXPECT_EQ(e.lr, 0.0);
    }
}

TEST(Training, IsDeterministic) {
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.batch_size = 4;
    const auto a = train_classifier(toy_images(2, 0), toy_images(1, 100), cfg);
    const auto b = train_classifier(toy_images(2, 0), toy_images(1, 100), cfg);
    EXPECT_EQ(a.log_csv(), b.log_csv());
    EXPECT_EQ(tensor::encode_checkpoint(a.best), tensor::encode_checkpoint(b.best));
}

TEST(Training, CosineScheduleInLog) {
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 8;
    const auto res = train_classifier(toy_images(2, 0), toy_images(1, 100), cfg);
    for (const auto& e : res.log)
        EXPECT_NEAR(e.lr, tensor::learning_rate(tensor::CosineAnnealing{5, 0}, 1e-3, static_cast<double>(e.epoch)), 1e-15);
}

TEST(Training, MissingClassIsConfigError) {
    auto train = toy_images(2, 0);
    train.erase(std::remove_if(train.begin(), train.end(), [](const LabeledImage& s) { return s.label == 2; }), train.end());
    EXPECT_THROW(train_classifier(train, toy_images(1, 100), TrainConfig{}), ConfigError);
}
