#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "coips/imaging/codec.hpp"
#include "coips/qa/loss.hpp"
#include "coips/synth/synthgen.hpp"

using namespace coips;
using namespace coips::synth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("coips_synth_" + name);
    fs::remove_all(dir);
    return dir;
}

bool inside_raster(const Ellipse& e, std::size_t n) {
    const double r = std::max(e.a, e.b) + 1;
    return e.cy - r >= 0 && e.cx - r >= 0 && e.cy + r <= static_cast<double>(n - 1) && e.cx + r <= static_cast<double>(n - 1);
}

}  // namespace

TEST(Synth, SampleIsDeterministic) {
    SynthSpec spec;
    for (auto q : {Quality::Ungradable, Quality::Gradable, Quality::Outstanding}) {
        const auto a = generate_sample(spec, q, 7), b = generate_sample(spec, q, 7);
        EXPECT_EQ(a.image.pixels.values(), b.image.pixels.values());
        EXPECT_EQ(a.mask, b.mask);
        EXPECT_EQ(a.label, q);
    }
    spec.seed = 43;
    EXPECT_NE(generate_sample(spec, Quality::Gradable, 7).image.pixels.values(),
              generate_sample(SynthSpec{}, Quality::Gradable, 7).image.pixels.values());
}

TEST(Synth, ArtifactRulesFollowLabel) {
    const SynthSpec spec;
    for (std::size_t i = 0; i < 60; ++i) {
        const auto u = generate_sample(spec, Quality::Ungradable, i);
        if (u.artifact == Artifact::OffCentre)
            EXPECT_GT(u.centre_offset, 0.25);
        else
            EXPECT_GE(u.blur_sigma, 3.0);
        const auto g = generate_sample(spec, Quality::Gradable, i);
        if (g.artifact == Artifact::Blur) {
            EXPECT_GE(g.blur_sigma, 1.0);
            EXPECT_LT(g.blur_sigma, 2.0);
        } else {
            EXPECT_GT(g.stripe_amplitude, spec.slight_stripe_max);
        }
        const auto o = generate_sample(spec, Quality::Outstanding, i);
        EXPECT_EQ(o.blur_sigma, 0.0);
        EXPECT_LE(o.stripe_amplitude, spec.slight_stripe_max);
        EXPECT_LE(o.centre_offset, spec.centre_jitter);
    }
}

TEST(Synth, OffCentreEllipseSitsAtOffset) {
    const SynthSpec spec;
    for (std::size_t i = 0; i < 40; ++i) {
        const auto s = generate_sample(spec, Quality::Ungradable, i);
        if (s.artifact != Artifact::OffCentre) continue;
        const double c = (spec.image_size - 1) / 2.0;
        const double d = std::hypot(s.faz.cy - c, s.faz.cx - c) / static_cast<double>(spec.image_size);
        EXPECT_NEAR(d, s.centre_offset, 1e-12);
        EXPECT_GT(d, 0.25);
    }
}

TEST(Synth, MaskIsTheRasterizedEllipse) {
    const SynthSpec spec;
    for (std::size_t i = 0; i < 30; ++i) {
        const auto s = generate_sample(spec, quality_from_index(i % 3), i);
        EXPECT_EQ(s.mask, rasterize(s.faz, spec.image_size, spec.image_size));
        if (s.label != Quality::Ungradable) EXPECT_GT(s.mask.foreground_count(), 0u);
    }
}

TEST(Synth, EllipseAreaMatchesAnalytic) {
    const SynthSpec spec;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < 150; ++i) {
        const auto s = generate_sample(spec, quality_from_index(i % 3), i);
        if (!inside_raster(s.faz, spec.image_size) || std::min(s.faz.a, s.faz.b) < 5) continue;
        const double analytic = std::numbers::pi * s.faz.a * s.faz.b;
        EXPECT_NEAR(static_cast<double>(s.mask.foreground_count()) / analytic, 1.0, 0.03) << s.image.source_id;
        ++checked;
    }
    EXPECT_GT(checked, 50u);

    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Ellipse e{rng.uniform(40, 60), rng.uniform(40, 60), rng.uniform(5, 30), rng.uniform(5, 30), rng.uniform(0, std::numbers::pi)};
        const double analytic = std::numbers::pi * e.a * e.b;
        EXPECT_NEAR(static_cast<double>(rasterize(e, 100, 100).foreground_count()) / analytic, 1.0, 0.03);
    }
}

TEST(Synth, BlurredUngradableHasLowLaplacianEnergy) {
    const SynthSpec spec;
    double blur = 0, clean = 0;
    std::size_t nb = 0, nc = 0;
    for (std::size_t i = 0; i < 80; ++i) {
        const auto u = generate_sample(spec, Quality::Ungradable, i);
        if (u.artifact == Artifact::Blur) {
            blur += imaging::laplacian_energy(u.image);
            ++nb;
        }
        clean += imaging::laplacian_energy(generate_sample(spec, Quality::Outstanding, i).image);
        ++nc;
    }
    ASSERT_GT(nb, 10u);
    EXPECT_LT(blur / nb, 0.5 * clean / nc);
}

TEST(Synth, EmptyCorpus) {
    const auto dir = scratch("empty");
    SynthSpec spec;
    const auto m = generate_corpus(spec, dir);
    EXPECT_TRUE(m.rows.empty());
    EXPECT_FALSE(fs::exists(dir / "images"));
    EXPECT_FALSE(fs::exists(dir / "masks"));
    EXPECT_TRUE(load_manifest(dir / "manifest.csv").rows.empty());
    fs::remove_all(dir);
}

TEST(Synth, CorpusCountsGiveHandCheckedWeights) {
    const auto dir = scratch("weights");
    SynthSpec spec;
    spec.counts = {70, 20, 10};
    const auto m = generate_corpus(spec, dir);
    std::array<std::size_t, 3> counts{};
    for (const auto& r : m.rows) ++counts[static_cast<std::size_t>(*r.label)];
    const auto cw = qa::class_weights(std::span<const std::size_t>(counts));
    EXPECT_NEAR(cw.weights[0], 0.47619, 5e-6);
    EXPECT_NEAR(cw.weights[1], 1.66667, 5e-6);
    EXPECT_NEAR(cw.weights[2], 3.33333, 5e-6);
    fs::remove_all(dir);
}

TEST(Synth, CorpusSplitIsAPartition) {
    const auto dir = scratch("split");
    SynthSpec spec;
    spec.counts = {40, 30, 30};
    const auto m = generate_corpus(spec, dir);
    ASSERT_EQ(m.rows.size(), 100u);
    std::set<std::string> ids;
    std::map<std::string, std::size_t> sizes;
    for (const auto& r : m.rows) {
        EXPECT_TRUE(ids.insert(r.source_id).second);
        ++sizes[r.split];
        EXPECT_TRUE(fs::exists(m.resolve(r.image_path)));
        EXPECT_TRUE(fs::exists(m.resolve(r.mask_path)));
    }
    std::size_t total = 0;
    for (const auto& [g, n] : sizes) total += n;
    EXPECT_EQ(total, 100u);
    EXPECT_GT(sizes["train"], sizes["test"]);
    EXPECT_GT(sizes["test"], 0u);

    const auto reread = load_manifest(dir / "manifest.csv");
    ASSERT_EQ(reread.rows.size(), m.rows.size());
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        EXPECT_EQ(reread.rows[i].source_id, m.rows[i].source_id);
        EXPECT_EQ(reread.rows[i].split, m.rows[i].split);
        EXPECT_EQ(reread.rows[i].label, m.rows[i].label);
    }
    fs::remove_all(dir);
}

TEST(Synth, CorpusIsByteIdenticalOnRerun) {
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    SynthSpec spec;
    spec.counts = {5, 5, 5};
    const auto ma = generate_corpus(spec, a);
    generate_corpus(spec, b);
    EXPECT_EQ(imaging::read_file(a / "manifest.csv"), imaging::read_file(b / "manifest.csv"));
    for (const auto& r : ma.rows) {
        EXPECT_EQ(imaging::read_file(a / r.image_path), imaging::read_file(b / r.image_path));
        EXPECT_EQ(imaging::read_file(a / r.mask_path), imaging::read_file(b / r.mask_path));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Synth, StoredImageMatchesGeneratedSample) {
    const auto dir = scratch("stored");
    SynthSpec spec;
    spec.counts = {1, 1, 1};
    const auto m = generate_corpus(spec, dir);
    for (const auto& r : m.rows) {
        const auto s = generate_sample(spec, *r.label, 0);
        const auto img = imaging::load_image(m.resolve(r.image_path), r.field_mm, r.source_id);
        EXPECT_EQ(img.pixels.values(), s.image.pixels.values());
        EXPECT_EQ(imaging::decode_mask_png(imaging::read_file(m.resolve(r.mask_path))), s.mask);
    }
    fs::remove_all(dir);
}

TEST(Synth, InvalidSpec) {
    SynthSpec spec;
    spec.faz_semi_axis_mm = {0.2, 0.8};
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = SynthSpec{};
    spec.image_size = 4;
    EXPECT_THROW(spec.validate(), ConfigError);
}
