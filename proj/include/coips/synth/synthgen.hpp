#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "coips/imaging/codec.hpp"
#include "coips/manifest.hpp"
#include "coips/pipeline/split.hpp"
#include "coips/quality.hpp"
#include "coips/util/rng.hpp"

namespace coips::synth {

using imaging::FazMask;
using imaging::ImageTensor;

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Corpus recipe. Artifact thresholds are calibrations of the qualitative
/// grading rules: Outstanding is clean or faintly striped, Gradable carries
/// moderate blur or stripes, Ungradable is heavily blurred or off-centre.
struct SynthSpec {
    std::array<std::size_t, 3> counts{0, 0, 0};  // indexed by Quality
    std::size_t image_size = 64;
    double field_mm = 3.0;
    std::uint64_t seed = 42;

    Range gradable_blur{1.0, 2.0};
    Range ungradable_blur{3.0, 4.5};
    double slight_stripe_max = 0.03;
    Range moderate_stripe{0.2, 0.35};
    Range stripe_period{4.0, 10.0};
    Range ungradable_offset{0.27, 0.35};  // fraction of width, always > 0.25
    double centre_jitter = 0.05;          // fraction of width for gradable content
    Range faz_semi_axis_mm{0.25, 0.6};

    void validate() const {
        if (image_size < 8) throw ConfigError("synth image_size must be >= 8");
        if (!(field_mm > 0.0)) throw ConfigError("synth field_mm must be positive");
        if (!(faz_semi_axis_mm.lo > 0.0) || faz_semi_axis_mm.hi < faz_semi_axis_mm.lo ||
            !(faz_semi_axis_mm.hi < field_mm / 4.0))
            throw ConfigError("FAZ semi-axes must be positive and below field_mm/4");
        if (!(ungradable_offset.lo > 0.25)) throw ConfigError("ungradable offset must exceed 25% of width");
        if (!(gradable_blur.hi <= ungradable_blur.lo)) throw ConfigError("gradable blur must stay below ungradable blur");
    }
};

/// Which artifact produced the label; recorded for analysis and tests.
enum class Artifact { Clean, SlightStripes, Blur, Stripes, OffCentre };

struct Ellipse {
    double cy = 0, cx = 0;  // pixels
    double a = 0, b = 0;    // semi-axes, pixels
    double angle = 0;       // radians

    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double u = std::cos(angle) * dx + std::sin(angle) * dy;
        const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

struct Sample {
    ImageTensor image;
    Quality label = Quality::Ungradable;
    FazMask mask;
    Ellipse faz;
    Artifact artifact = Artifact::Clean;
    double blur_sigma = 0.0;
    double stripe_amplitude = 0.0;
    double centre_offset = 0.0;  // fraction of width
};

inline std::string sample_id(Quality q, std::size_t index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05zu", to_string(q), index);
    return buf;
}

/// Rasterizes an ellipse by pixel-centre inclusion.
inline FazMask rasterize(const Ellipse& e, std::size_t h, std::size_t w, const std::string& id = {}) {
    FazMask m(h, w, id);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m.at(y, x) = e.contains(static_cast<double>(y), static_cast<double>(x)) ? 1 : 0;
    return m;
}

/// Deterministic function of (spec, label, index).
inline Sample generate_sample(const SynthSpec& spec, Quality label, std::size_t index) {
    const std::size_t n = spec.image_size;
    const double size = static_cast<double>(n);
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(label) + 1, index));
    Sample s;
    s.label = label;

    switch (label) {
        case Quality::Outstanding:
            s.artifact = rng.bernoulli(0.5) ? Artifact::Clean : Artifact::SlightStripes;
            if (s.artifact == Artifact::SlightStripes) s.stripe_amplitude = rng.uniform(0.0, spec.slight_stripe_max);
            break;
        case Quality::Gradable:
            if (rng.bernoulli(0.5)) {
                s.artifact = Artifact::Blur;
                s.blur_sigma = rng.uniform(spec.gradable_blur.lo, spec.gradable_blur.hi);
            } else {
                s.artifact = Artifact::Stripes;
                s.stripe_amplitude = rng.uniform(spec.moderate_stripe.lo, spec.moderate_stripe.hi);
            }
            break;
        case Quality::Ungradable:
            if (rng.bernoulli(0.5)) {
                s.artifact = Artifact::Blur;
                s.blur_sigma = rng.uniform(spec.ungradable_blur.lo, spec.ungradable_blur.hi);
            } else {
                s.artifact = Artifact::OffCentre;
            }
            break;
    }

    // FAZ geometry
    const double px_per_mm = size / spec.field_mm;
    const double offset_frac = s.artifact == Artifact::OffCentre
                                   ? rng.uniform(spec.ungradable_offset.lo, spec.ungradable_offset.hi)
                                   : rng.uniform(0.0, spec.centre_jitter);
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.centre_offset = offset_frac;
    Ellipse& e = s.faz;
    e.cy = (size - 1) / 2 + offset_frac * size * std::sin(dir);
    e.cx = (size - 1) / 2 + offset_frac * size * std::cos(dir);
    e.a = rng.uniform(spec.faz_semi_axis_mm.lo, spec.faz_semi_axis_mm.hi) * px_per_mm;
    e.b = rng.uniform(spec.faz_semi_axis_mm.lo, spec.faz_semi_axis_mm.hi) * px_per_mm;
    e.angle = rng.uniform(0.0, std::numbers::pi);

    // band-passed noise -> bright vessel-like ridges
    ImageTensor noise = imaging::make_image(1, n, n, spec.field_mm);
    for (auto& v : noise.pixels.data()) v = static_cast<float>(rng.normal());
    const ImageTensor fine = imaging::gaussian_blur(noise, 0.8);
    const ImageTensor coarse = imaging::gaussian_blur(noise, 2.5);
    double var = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) var += std::pow(fine.pixels[i] - coarse.pixels[i], 2);
    const double sd = std::sqrt(var / static_cast<double>(n * n)) + 1e-12;

    s.mask = rasterize(e, n, n);
    ImageTensor img = imaging::make_image(1, n, n, spec.field_mm);
    for (std::size_t i = 0; i < n * n; ++i) {
        const double bp = (fine.pixels[i] - coarse.pixels[i]) / sd;
        const double vessel = 1.0 / (1.0 + std::exp(-2.5 * bp));
        img.pixels[i] = s.mask.pixels[i] ? static_cast<float>(0.05 + 0.05 * vessel)
                                          : static_cast<float>(0.15 + 0.75 * vessel);
    }
    if (s.blur_sigma > 0.0) img = imaging::gaussian_blur(img, s.blur_sigma);
    if (s.stripe_amplitude > 0.0) {
        const double period = rng.uniform(spec.stripe_period.lo, spec.stripe_period.hi);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t y = 0; y < n; ++y) {
            const double d = s.stripe_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(y) / period + phase);
            for (std::size_t x = 0; x < n; ++x) img.at(0, y, x) = static_cast<float>(img.at(0, y, x) + d);
        }
    }
    for (auto& v : img.pixels.data()) v = std::clamp(v, 0.0f, 1.0f);
    // quantize exactly as the PNG written to disk will be
    for (auto& v : img.pixels.data()) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;

    const std::string id = sample_id(label, index);
    img.source_id = id;
    s.mask.source_id = id;
    s.image = std::move(img);
    return s;
}

/// Writes images/, masks/ and manifest.csv under out_dir. Splits are
/// stratified by class with the hold-out proportions of the quality set.
inline Manifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    std::vector<std::string> ids;
    std::vector<int> labels;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < spec.counts[c]; ++i) {
            ids.push_back(sample_id(quality_from_index(c), i));
            labels.push_back(static_cast<int>(c));
        }
    Manifest manifest;
    manifest.base_dir = out_dir;
    if (!ids.empty()) {
        const auto split = pipeline::split_stratified(ids, labels, pipeline::table3_holdout(), spec.seed);
        std::size_t k = 0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < spec.counts[c]; ++i, ++k) {
                const Sample s = generate_sample(spec, quality_from_index(c), i);
                ManifestRow row;
                row.source_id = ids[k];
                row.label = s.label;
                row.image_path = "images/" + ids[k] + ".png";
                row.mask_path = "masks/" + ids[k] + ".png";
                row.field_mm = spec.field_mm;
                row.split = split.groups[k];
                imaging::write_file(out_dir / row.image_path, imaging::encode_png(s.image));
                imaging::write_file(out_dir / row.mask_path, imaging::encode_mask_png(s.mask));
                manifest.rows.push_back(std::move(row));
            }
    }
    imaging::write_file(out_dir / "manifest.csv", write_manifest_csv(manifest));
    return manifest;
}

}  // namespace coips::synth
