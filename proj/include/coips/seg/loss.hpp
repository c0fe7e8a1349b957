#pragma once

#include <vector>

#include "coips/imaging/image.hpp"
#include "coips/tensor/ops.hpp"

namespace coips::seg {

using imaging::FazMask;
using tensor::Shape;
using tensor::Tensor;

/// lambda * CE + (1 - lambda) * (1 - softDice), averaged over the batch.
/// CE is the pixel mean of -log p_true (p floored at 1e-12); softDice uses
/// foreground probability sums with +1 smoothing in numerator and denominator.
/// logits: [N,2,H,W] or [2,H,W]; one mask per sample.
template <class T>
Tensor<T> combined_loss(const Tensor<T>& logits, const std::vector<FazMask>& gt, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw RangeError("lambda must lie in [0,1]");
    const Tensor<T> x = logits.rank() == 3 ? tensor::reshape(logits, Shape{1, logits.dim(0), logits.dim(1), logits.dim(2)})
                                           : logits;
    if (x.rank() != 4 || x.dim(1) != 2) throw DimensionError("combined_loss: logits must be [N,2,H,W], got " + tensor::to_string(logits.shape()));
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    if (gt.size() != n) throw DimensionError("combined_loss: " + std::to_string(gt.size()) + " masks for batch of " + std::to_string(n));
    Tensor<T> onehot(x.shape()), fg_target(x.shape()), fg_select(x.shape());
    Tensor<T> gt_plus_one(Shape{n});
    for (std::size_t b = 0; b < n; ++b) {
        if (gt[b].height != h || gt[b].width != w) throw DimensionError("combined_loss: mask size differs from logits");
        double g = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            const bool fg = gt[b].pixels[i] != 0;
            onehot[(b * 2 + (fg ? 1 : 0)) * hw + i] = T(1);
            fg_target[(b * 2 + 1) * hw + i] = fg ? T(1) : T(0);
            fg_select[(b * 2 + 1) * hw + i] = T(1);
            g += fg;
        }
        gt_plus_one[b] = static_cast<T>(g + 1.0);
    }
    const auto p = tensor::softmax(x);
    const auto logp = tensor::log_clamped(p, T(1e-12));
    const auto ce = tensor::scale(tensor::sum_per_sample(tensor::mul(onehot, logp)), T(-1) / static_cast<T>(hw));
    const auto inter = tensor::sum_per_sample(tensor::mul(p, fg_target));
    const auto psum = tensor::sum_per_sample(tensor::mul(p, fg_select));
    const auto dice = tensor::div(tensor::add_scalar(tensor::scale(inter, T(2)), T(1)), tensor::add(psum, gt_plus_one));
    const auto dice_loss = tensor::add_scalar(tensor::scale(dice, T(-1)), T(1));
    const auto per_sample = tensor::add(tensor::scale(ce, static_cast<T>(lambda)), tensor::scale(dice_loss, static_cast<T>(1.0 - lambda)));
    return tensor::mean(per_sample);
}

template <class T>
Tensor<T> combined_loss(const Tensor<T>& logits, const FazMask& gt, double lambda = 0.5) {
    return combined_loss(logits, std::vector<FazMask>{gt}, lambda);
}

}  // namespace coips::seg
