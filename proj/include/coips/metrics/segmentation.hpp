#pragma once

#include <span>
#include <string>

#include "coips/imaging/image.hpp"

namespace coips::metrics {

using imaging::FazMask;

struct OverlapCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t sr() const { return tp + fp; }
    std::size_t gt() const { return tp + fn; }
};

inline void require_same_geometry(const FazMask& a, const FazMask& b) {
    if (a.height != b.height || a.width != b.width)
        throw DimensionError("mask shapes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                             std::to_string(b.height) + "x" + std::to_string(b.width));
}

inline OverlapCounts overlap(const FazMask& sr, const FazMask& gt) {
    require_same_geometry(sr, gt);
    OverlapCounts c;
    for (std::size_t i = 0; i < sr.pixels.size(); ++i) {
        const bool s = sr.pixels[i] != 0, g = gt.pixels[i] != 0;
        c.tp += s && g;
        c.fp += s && !g;
        c.fn += !s && g;
    }
    return c;
}

/// (2|SR∩GT| + 1) / (|SR| + |GT| + 1).
inline double dice_coefficient(const FazMask& sr, const FazMask& gt) {
    const auto c = overlap(sr, gt);
    return (2.0 * static_cast<double>(c.tp) + 1.0) / (static_cast<double>(c.sr() + c.gt()) + 1.0);
}

/// Smoothed soft Dice of a foreground probability map against a mask.
inline double dice_coefficient(std::span<const double> probability, const FazMask& gt) {
    if (probability.size() != gt.pixels.size()) throw DimensionError("probability map and mask differ in size");
    double inter = 0.0, p = 0.0, g = 0.0;
    for (std::size_t i = 0; i < probability.size(); ++i) {
        inter += probability[i] * gt.pixels[i];
        p += probability[i];
        g += gt.pixels[i];
    }
    return (2.0 * inter + 1.0) / (p + g + 1.0);
}

/// 2|SR∩GT| / (|SR| + |GT|), undefined when both masks are empty.
inline double dice_unsmoothed(const FazMask& sr, const FazMask& gt) {
    const auto c = overlap(sr, gt);
    if (c.sr() + c.gt() == 0) throw UndefinedMetricError("Dice undefined for two empty masks");
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(c.sr() + c.gt());
}

/// |GT∩SR| / |GT∪SR|.
inline double jaccard(const FazMask& sr, const FazMask& gt) {
    const auto c = overlap(sr, gt);
    const std::size_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) throw UndefinedMetricError("Jaccard undefined for two empty masks");
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

inline double seg_precision(const FazMask& sr, const FazMask& gt) {
    const auto c = overlap(sr, gt);
    if (c.sr() == 0) throw UndefinedMetricError("precision undefined for an empty prediction");
    return static_cast<double>(c.tp) / static_cast<double>(c.sr());
}

inline double seg_recall(const FazMask& sr, const FazMask& gt) {
    const auto c = overlap(sr, gt);
    if (c.gt() == 0) throw UndefinedMetricError("recall undefined for an empty ground truth");
    return static_cast<double>(c.tp) / static_cast<double>(c.gt());
}

}  // namespace coips::metrics
