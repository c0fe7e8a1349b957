#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "coips/tensor/tensor.hpp"

namespace coips::imaging {

using tensor::Shape;
using tensor::Tensor;

/// C×H×W raster (C in {1,3}) with the physical field of view per side.
struct ImageTensor {
    Tensor<float> pixels;
    double field_mm = 3.0;
    std::string source_id;

    std::size_t channels() const { return pixels.dim(0); }
    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }

    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height() + y) * width() + x]; }
    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height() + y) * width() + x]; }
};

inline ImageTensor make_image(std::size_t c, std::size_t h, std::size_t w, double field_mm = 3.0,
                              std::string source_id = {}) {
    return ImageTensor{Tensor<float>(Shape{c, h, w}), field_mm, std::move(source_id)};
}

/// Binary H×W mask; values are 0 or 1.
struct FazMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
    std::string source_id;

    FazMask() = default;
    FazMask(std::size_t h, std::size_t w, std::string id = {})
        : height(h), width(w), pixels(h * w, 0), source_id(std::move(id)) {}

    std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }

    std::size_t foreground_count() const {
        return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
    }

    bool operator==(const FazMask& o) const {
        return height == o.height && width == o.width && pixels == o.pixels;
    }
};

namespace detail {
inline float sample_bilinear(const ImageTensor& img, std::size_t c, double y, double x) {
    const double h = static_cast<double>(img.height()), w = static_cast<double>(img.width());
    constexpr double tol = 1e-9;
    if (y < -tol || x < -tol || y > h - 1 + tol || x > w - 1 + tol) return 0.0f;
    y = std::clamp(y, 0.0, h - 1);
    x = std::clamp(x, 0.0, w - 1);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    const double top = img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx;
    const double bot = img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx;
    return static_cast<float>(top * (1 - fy) + bot * fy);
}

inline double align_corners_coord(std::size_t i, std::size_t src, std::size_t dst) {
    if (dst <= 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
}
}  // namespace detail

/// Bilinear resize, align-corners convention. field_mm is carried unchanged.
inline ImageTensor resize(const ImageTensor& img, std::size_t target_h, std::size_t target_w) {
    if (target_h < 8 || target_w < 8)
        throw GeometryError("resize target must be at least 8x8, got " + std::to_string(target_h) + "x" +
                            std::to_string(target_w));
    if (target_h == img.height() && target_w == img.width()) return {img.pixels.clone(), img.field_mm, img.source_id};
    ImageTensor out = make_image(img.channels(), target_h, target_w, img.field_mm, img.source_id);
    for (std::size_t c = 0; c < img.channels(); ++c)
        for (std::size_t y = 0; y < target_h; ++y) {
            const double sy = detail::align_corners_coord(y, img.height(), target_h);
            for (std::size_t x = 0; x < target_w; ++x)
                out.at(c, y, x) = detail::sample_bilinear(img, c, sy, detail::align_corners_coord(x, img.width(), target_w));
        }
    return out;
}

/// Nearest-neighbour mask resize (used to map predictions back to source resolution).
inline FazMask resize_nearest(const FazMask& mask, std::size_t target_h, std::size_t target_w) {
    FazMask out(target_h, target_w, mask.source_id);
    for (std::size_t y = 0; y < target_h; ++y) {
        const std::size_t sy = std::min(mask.height - 1, y * mask.height / target_h);
        for (std::size_t x = 0; x < target_w; ++x)
            out.at(y, x) = mask.at(sy, std::min(mask.width - 1, x * mask.width / target_w));
    }
    return out;
}

/// Per-channel (x - mean) / std with population std; channels whose std is
/// below 1e-8 become all zeros.
inline ImageTensor zscore_normalize(const ImageTensor& img) {
    ImageTensor out{img.pixels.clone(), img.field_mm, img.source_id};
    const std::size_t plane = img.height() * img.width();
    for (std::size_t c = 0; c < img.channels(); ++c) {
        float* p = out.pixels.data().data() + c * plane;
        double m = 0.0;
        for (std::size_t i = 0; i < plane; ++i) m += p[i];
        m /= static_cast<double>(plane);
        double v = 0.0;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
        const double sd = std::sqrt(v / static_cast<double>(plane));
        for (std::size_t i = 0; i < plane; ++i) p[i] = sd < 1e-8 ? 0.0f : static_cast<float>((p[i] - m) / sd);
    }
    return out;
}

inline ImageTensor hflip(const ImageTensor& img) {
    ImageTensor out = make_image(img.channels(), img.height(), img.width(), img.field_mm, img.source_id);
    for (std::size_t c = 0; c < img.channels(); ++c)
        for (std::size_t y = 0; y < img.height(); ++y)
            for (std::size_t x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
    return out;
}

inline FazMask hflip(const FazMask& mask) {
    FazMask out(mask.height, mask.width, mask.source_id);
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(y, mask.width - 1 - x);
    return out;
}

/// Rotation about the image centre (counter-clockwise for positive degrees in
/// a y-down raster), bilinear sampling, zero fill outside the source.
inline ImageTensor rotate(const ImageTensor& img, double degrees) {
    if (std::abs(degrees) > 180.0) throw RangeError("rotation angle must lie in [-180, 180]");
    if (degrees == 0.0) return {img.pixels.clone(), img.field_mm, img.source_id};
    ImageTensor out = make_image(img.channels(), img.height(), img.width(), img.field_mm, img.source_id);
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (static_cast<double>(img.height()) - 1) / 2, cx = (static_cast<double>(img.width()) - 1) / 2;
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            // inverse map: rotate the destination offset by -angle
            const double sx = cs * dx - sn * dy + cx;
            const double sy = sn * dx + cs * dy + cy;
            for (std::size_t c = 0; c < img.channels(); ++c) out.at(c, y, x) = detail::sample_bilinear(img, c, sy, sx);
        }
    return out;
}

/// Separable Gaussian blur with reflected borders; radius ceil(3 sigma).
inline ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
    if (sigma <= 0.0) return {img.pixels.clone(), img.field_mm, img.source_id};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= total;
    const int h = static_cast<int>(img.height()), w = static_cast<int>(img.width());
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
        return i;
    };
    ImageTensor tmp = make_image(img.channels(), img.height(), img.width(), img.field_mm, img.source_id);
    ImageTensor out = make_image(img.channels(), img.height(), img.width(), img.field_mm, img.source_id);
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img.at(c, y, reflect(x + i, w));
                tmp.at(c, y, x) = static_cast<float>(s);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp.at(c, reflect(y + i, h), x);
                out.at(c, y, x) = static_cast<float>(s);
            }
    }
    return out;
}

/// Mean squared 4-neighbour Laplacian over interior pixels (sharpness proxy).
inline double laplacian_energy(const ImageTensor& img) {
    double e = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < img.channels(); ++c)
        for (std::size_t y = 1; y + 1 < img.height(); ++y)
            for (std::size_t x = 1; x + 1 < img.width(); ++x) {
                const double l = img.at(c, y - 1, x) + img.at(c, y + 1, x) + img.at(c, y, x - 1) +
                                 img.at(c, y, x + 1) - 4.0 * img.at(c, y, x);
                e += l * l;
                ++n;
            }
    return n ? e / static_cast<double>(n) : 0.0;
}

/// Collapses RGB to luminance; single-channel images pass through.
inline ImageTensor to_gray(const ImageTensor& img) {
    if (img.channels() == 1) return img;
    ImageTensor out = make_image(1, img.height(), img.width(), img.field_mm, img.source_id);
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
    return out;
}

}  // namespace coips::imaging
