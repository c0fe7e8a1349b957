#include <gtest/gtest.h>

#include <map>

#include "support/gradcheck.hpp"

using namespace coips;
using namespace coips::testing;

TEST(GradCheck, EveryOpMatchesCentralDifferences) {
    const auto cases = gradient_cases(20240611, 20);
    std::map<std::string, std::size_t> per_op;
    for (const auto& c : cases) {
        const double err = max_grad_error(c.inputs, c.f);
        EXPECT_LT(err, kFdTolerance) << c.op;
        ++per_op[c.op];
    }
    EXPECT_EQ(per_op.size(), 22u);
    for (const auto& [op, n] : per_op) EXPECT_GE(n, 20u) << op;
}

TEST(GradCheck, ConvWithStrideAndPadding) {
    Rng rng(3);
    const auto x = random_tensor({2, 2, 7, 7}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    const double err = max_grad_error({x, w, b}, [](const std::vector<Td>& in) {
        return project(tensor::conv2d(in[0], in[1], std::optional<Td>(in[2]), 2, 1), 11);
    });
    EXPECT_LT(err, kFdTolerance);
}

TEST(GradCheck, ComposedNetworkFragment) {
    Rng rng(4);
    const auto x = random_tensor({1, 2, 8, 8}, rng), w = random_tensor({3, 2, 3, 3}, rng);
    const auto g = random_tensor({3}, rng, 0.5, 1.5), b = random_tensor({3}, rng);
    const double err = max_grad_error({x, w, g, b}, [](const std::vector<Td>& in) {
        namespace t = tensor;
        const auto h = t::leaky_relu(t::instance_norm(t::conv2d(in[0], in[1], std::nullopt, 1, 1), in[2], in[3]), 0.1);
        return project(t::concat_channels(t::upsample2x(t::maxpool2d(h, 2, 2)), h), 12);
    });
    EXPECT_LT(err, kFdTolerance);
}
