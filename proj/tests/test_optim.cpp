#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "coips/tensor/checkpoint.hpp"
#include "coips/tensor/optim.hpp"
#include "coips/tensor/schedule.hpp"
#include "support/gradcheck.hpp"

using namespace coips;
using namespace coips::tensor;

namespace {

using Td = Tensor<double>;

/// One scalar parameter with its gradient preset to `g`.
Td param_with_grad(double p, double g) {
    Td t = Td::scalar(p);
    t.set_requires_grad(true);
    t.grad_buffer()[0] = g;
    return t;
}

void set_grad(Td& t, double g) { t.grad_buffer()[0] = g; }

}  // namespace

TEST(Sgd, ZeroMomentumIsPlainSgd) {
    std::vector<Td> ps{param_with_grad(1.0, 2.0)};
    auto st = OptimizerState<double>::sgd_nesterov(0.1, 0.0);
    sgd_nesterov_step(std::span<Td>(ps), st);
    EXPECT_NEAR(ps[0][0], 0.8, 1e-15);
    EXPECT_EQ(st.step_count, 1u);
}

TEST(Sgd, ZeroGradientIsFixedPoint) {
    std::vector<Td> ps{param_with_grad(0.3, 0.0)};
    auto st = OptimizerState<double>::sgd_nesterov(0.01, 0.99);
    for (int i = 0; i < 5; ++i) sgd_nesterov_step(std::span<Td>(ps), st);
    EXPECT_EQ(ps[0][0], 0.3);
}

TEST(Sgd, NesterovTwoStepsMatchHandIteration) {
    const double mu = 0.99, lr = 0.01, g = 1.0;
    double p = 0.0, v = 0.0;
    std::vector<double> ref;
    for (int i = 0; i < 2; ++i) {
        v = mu * v - lr * g;
        p = p + mu * v - lr * g;
        ref.push_back(p);
    }
    EXPECT_NEAR(ref[0], -0.0199, 1e-15);
    EXPECT_NEAR(ref[1], -0.049601, 1e-12);

    std::vector<Td> ps{param_with_grad(0.0, g)};
    auto st = OptimizerState<double>::sgd_nesterov(lr, mu);
    sgd_nesterov_step(std::span<Td>(ps), st);
    EXPECT_NEAR(ps[0][0], ref[0], 1e-15);
    sgd_nesterov_step(std::span<Td>(ps), st);
    EXPECT_NEAR(ps[0][0], ref[1], 1e-15);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
    std::vector<Td> ps{param_with_grad(0.0, 1.0)};
    auto st = OptimizerState<double>::adam(0.001);
    adam_step(std::span<Td>(ps), st);
    EXPECT_NEAR(ps[0][0], -0.001, 1e-10);
}

TEST(Adam, ZeroGradientFromZeroState) {
    std::vector<Td> ps{param_with_grad(0.25, 0.0)};
    auto st = OptimizerState<double>::adam(0.001);
    for (int i = 0; i < 3; ++i) adam_step(std::span<Td>(ps), st);
    EXPECT_EQ(ps[0][0], 0.25);
}

TEST(Adam, ThreeStepTraceMatchesReference) {
    const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 2.0;
    double p = 0.5, m = 0.0, v = 0.0;
    std::vector<Td> ps{param_with_grad(0.5, g)};
    auto st = OptimizerState<double>::adam(lr);
    for (int t = 1; t <= 3; ++t) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
        p -= lr * mhat / (std::sqrt(vhat) + eps);
        adam_step(std::span<Td>(ps), st);
        EXPECT_NEAR(ps[0][0], p, 1e-12) << "step " << t;
    }
}

TEST(Optimizer, ZeroLearningRateIsIdentity) {
    Rng rng(5);
    for (auto kind : {OptimizerKind::Adam, OptimizerKind::SgdNesterov}) {
        std::vector<Td> ps{coips::testing::random_tensor({3, 4}, rng), coips::testing::random_tensor({5}, rng)};
        std::vector<std::vector<double>> before;
        for (auto& p : ps) {
            p.set_requires_grad(true);
            for (auto& g : p.grad_buffer()) g = rng.uniform(-1, 1);
            before.emplace_back(p.values());
        }
        auto st = kind == OptimizerKind::Adam ? OptimizerState<double>::adam(0.0) : OptimizerState<double>::sgd_nesterov(0.0);
        for (int i = 0; i < 4; ++i) optimizer_step(std::span<Td>(ps), st);
        for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i].values(), before[i]);
    }
}

TEST(Optimizer, BufferShapeMismatchIsDimensionError) {
    std::vector<Td> ps{param_with_grad(1.0, 1.0)};
    auto st = OptimizerState<double>::adam(0.001);
    adam_step(std::span<Td>(ps), st);
    std::vector<Td> other{Td(Shape{3})};
    EXPECT_THROW(adam_step(std::span<Td>(other), st), DimensionError);
    std::vector<Td> two{param_with_grad(1.0, 1.0), param_with_grad(1.0, 1.0)};
    EXPECT_THROW(adam_step(std::span<Td>(two), st), DimensionError);
}

TEST(Optimizer, WrongKindIsContractError) {
    std::vector<Td> ps{param_with_grad(1.0, 1.0)};
    auto st = OptimizerState<double>::adam(0.001);
    EXPECT_THROW(sgd_nesterov_step(std::span<Td>(ps), st), ContractError);
}

TEST(Optimizer, MinimizesQuadratic) {
    for (auto kind : {OptimizerKind::Adam, OptimizerKind::SgdNesterov}) {
        std::vector<Td> ps{param_with_grad(5.0, 0.0)};
        auto st = kind == OptimizerKind::Adam ? OptimizerState<double>::adam(0.1) : OptimizerState<double>::sgd_nesterov(0.01, 0.9);
        for (int i = 0; i < 500; ++i) {
            set_grad(ps[0], 2.0 * (ps[0][0] - 3.0));
            optimizer_step(std::span<Td>(ps), st);
        }
        EXPECT_NEAR(ps[0][0], 3.0, 1e-2);
    }
}

TEST(Schedule, CosineEndpoints) {
    const CosineAnnealing c{5, 0};
    EXPECT_DOUBLE_EQ(learning_rate(c, 0.001, 0), 0.001);
    EXPECT_NEAR(learning_rate(c, 0.001, 5), 0.0, 1e-18);
    EXPECT_NEAR(learning_rate(c, 0.001, 2.5), 0.0005, 1e-15);
}

TEST(Schedule, PolyHalfway) {
    const PolyDecay p{100, 0.9};
    EXPECT_NEAR(learning_rate(p, 0.01, 50), 0.0053589, 5e-8);
    EXPECT_NEAR(learning_rate(p, 0.01, 50), 0.01 * std::pow(0.5, 0.9), 1e-15);
    EXPECT_DOUBLE_EQ(learning_rate(p, 0.01, 0), 0.01);
}

TEST(Schedule, Nonincreasing) {
    const LrSchedule schedules[] = {CosineAnnealing{5, 0}, CosineAnnealing{17, 1e-4}, PolyDecay{100, 0.9}, PolyDecay{7, 2.0}};
    for (const auto& s : schedules) {
        const double horizon = std::holds_alternative<CosineAnnealing>(s) ? std::get<CosineAnnealing>(s).t_max
                                                                          : std::get<PolyDecay>(s).total;
        double prev = learning_rate(s, 0.01, 0);
        for (int i = 1; i <= 200; ++i) {
            const double lr = learning_rate(s, 0.01, horizon * i / 200.0);
            EXPECT_LE(lr, prev + 1e-18);
            prev = lr;
        }
    }
}

TEST(Schedule, BeyondHorizonIsRangeError) {
    EXPECT_THROW(learning_rate(CosineAnnealing{5, 0}, 0.001, 5.5), RangeError);
    EXPECT_THROW(learning_rate(PolyDecay{100, 0.9}, 0.01, 101), RangeError);
    EXPECT_THROW(learning_rate(PolyDecay{100, 0.9}, 0.0, 1), RangeError);
    EXPECT_THROW(learning_rate(PolyDecay{100, 0.9}, 0.01, -1), RangeError);
}

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.netspec_json = R"({"kind":"unet","poolings":2})";
    Rng rng(9);
    Tensor<float> a(Shape{2, 3});
    for (auto& v : a.data()) v = static_cast<float>(rng.normal());
    a[0] = -0.0f;
    a[1] = 1e-40f;
    c.tensors.push_back({"enc0.weight", a});
    c.tensors.push_back({"enc0.bias", Tensor<float>(Shape{3}, std::vector<float>{1.5f, -2.25f, 3.0f})});
    return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto c = sample_checkpoint();
    const auto bytes = encode_checkpoint(c);
    EXPECT_EQ(bytes.substr(0, 4), "COIP");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
    const auto d = decode_checkpoint(bytes);
    EXPECT_EQ(d.netspec_json, c.netspec_json);
    ASSERT_EQ(d.tensors.size(), c.tensors.size());
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
        EXPECT_EQ(d.tensors[i].name, c.tensors[i].name);
        EXPECT_EQ(d.tensors[i].value.shape(), c.tensors[i].value.shape());
        for (std::size_t j = 0; j < c.tensors[i].value.numel(); ++j)
            EXPECT_EQ(std::bit_cast<std::uint32_t>(d.tensors[i].value[j]), std::bit_cast<std::uint32_t>(c.tensors[i].value[j]));
    }
    EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "coips_ckpt_test";
    std::filesystem::remove_all(dir);
    const auto c = sample_checkpoint();
    save_checkpoint(c, dir / "nested" / "net.ckpt");
    EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "nested" / "net.ckpt")), encode_checkpoint(c));
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MalformedBytes) {
    const auto bytes = encode_checkpoint(sample_checkpoint());
    EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes + "z"), FormatError);
    std::string bad_version = bytes;
    bad_version[4] = 7;
    EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
    EXPECT_THROW(decode_checkpoint(""), FormatError);
}
