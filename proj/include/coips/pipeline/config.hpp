#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "coips/imaging/codec.hpp"
#include "coips/nn/netspec.hpp"
#include "coips/pipeline/split.hpp"
#include "coips/qa/train.hpp"
#include "coips/seg/train.hpp"
#include "coips/synth/synthgen.hpp"

namespace coips::pipeline {

using json = nlohmann::json;

struct PartitionConfig {
    std::string scheme = "holdout";  // "holdout" or "kfold"
    std::vector<std::string> names{"train", "test", "internal_test", "external_test"};
    std::vector<double> weights{6915, 2965, 300, 300};
    bool absolute = false;
    std::size_t k = 5;

    SplitScheme to_scheme() const {
        if (scheme == "kfold") return KFoldScheme{k};
        return HoldoutScheme{names, weights, absolute};
    }
};

struct EvalConfig {
    std::string report;     // report.json of the run under evaluation
    std::string masks_dir;  // predicted masks; empty means <report dir>/masks
};

/// Everything a CLI subcommand may need. The top-level seed drives every
/// random stream, network initialisation included.
struct PipelineConfig {
    std::string input_dir;
    std::string manifest;
    std::string split;  // manifest split to process; empty means all rows
    double field_mm = 3.0;
    std::string classifier_checkpoint;
    std::string segmenter_checkpoint;
    std::string output_dir = "coips_out";
    std::size_t threads = 1;
    std::uint64_t seed = 42;

    synth::SynthSpec synth{.counts = {300, 300, 300}};
    qa::TrainConfig train_qa;
    seg::TrainConfig train_seg;
    PartitionConfig partition;
    EvalConfig eval;

    /// Copies the top-level seed and field of view into the sub-configs.
    void propagate() {
        synth.seed = seed;
        train_qa.seed = seed;
        train_qa.net.seed = seed;
        train_seg.seed = seed;
        train_seg.net.seed = seed;
    }
};

enum class Command { Synth, Split, TrainQa, TrainSeg, Assess, Segment, Quantify, Pipeline, Eval };

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + (where.empty() ? it.key() : where + "." + it.key()) + "'");
}

template <class V>
void read(const json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception& e) {
        throw ConfigError("key '" + (where.empty() ? std::string(key) : where + "." + key) + "': " + e.what());
    }
}

inline void read_range(const json& j, const char* key, synth::Range& r, const std::string& where) {
    if (!j.contains(key)) return;
    std::vector<double> v;
    read(j, key, v, where);
    if (v.size() != 2) throw ConfigError("key '" + where + "." + key + "' must be [lo, hi]");
    r = {v[0], v[1]};
}

inline json range_json(const synth::Range& r) { return json::array({r.lo, r.hi}); }

template <class Net>
void read_net(const json& j, Net& net, const std::string& where) {
    if (!j.contains("net")) return;
    try {
        nn::merge_json(j.at("net"), net);
    } catch (const Error& e) {
        throw ConfigError(where + ".net: " + e.what());
    }
}

}  // namespace detail

inline json to_json(const PipelineConfig& c) {
    const auto& s = c.synth;
    const auto& q = c.train_qa;
    const auto& g = c.train_seg;
    json qa_net = nn::to_json(q.net);
    json seg_net = nn::to_json(g.net);
    qa_net.erase("seed");
    seg_net.erase("seed");
    return json{
        {"input_dir", c.input_dir},
        {"manifest", c.manifest},
        {"split", c.split},
        {"field_mm", c.field_mm},
        {"classifier_checkpoint", c.classifier_checkpoint},
        {"segmenter_checkpoint", c.segmenter_checkpoint},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
        {"seed", c.seed},
        {"synth",
         {{"counts", s.counts},
          {"image_size", s.image_size},
          {"field_mm", s.field_mm},
          {"gradable_blur", detail::range_json(s.gradable_blur)},
          {"ungradable_blur", detail::range_json(s.ungradable_blur)},
          {"slight_stripe_max", s.slight_stripe_max},
          {"moderate_stripe", detail::range_json(s.moderate_stripe)},
          {"stripe_period", detail::range_json(s.stripe_period)},
          {"ungradable_offset", detail::range_json(s.ungradable_offset)},
          {"centre_jitter", s.centre_jitter},
          {"faz_semi_axis_mm", detail::range_json(s.faz_semi_axis_mm)}}},
        {"train_qa",
         {{"net", qa_net},
          {"max_epochs", q.max_epochs},
          {"batch_size", q.batch_size},
          {"lr", q.lr},
          {"t_max", q.t_max},
          {"patience", q.patience},
          {"augment", q.augment},
          {"hflip_probability", q.hflip_probability},
          {"max_rotation_deg", q.max_rotation_deg},
          {"train_split", q.train_split},
          {"val_split", q.val_split}}},
        {"train_seg",
         {{"net", seg_net},
          {"folds", g.folds},
          {"max_epochs", g.max_epochs},
          {"batch_size", g.batch_size},
          {"lr", g.lr},
          {"momentum", g.momentum},
          {"poly_exponent", g.poly_exponent},
          {"patience", g.patience},
          {"augment", g.augment},
          {"split", g.split},
          {"max_samples", g.max_samples},
          {"threads", g.threads}}},
        {"partition",
         {{"scheme", c.partition.scheme},
          {"names", c.partition.names},
          {"weights", c.partition.weights},
          {"absolute", c.partition.absolute},
          {"k", c.partition.k}}},
        {"eval", {{"report", c.eval.report}, {"masks_dir", c.eval.masks_dir}}}};
}

/// Structural checks that hold for every command.
inline void validate(const PipelineConfig& c) {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("key '" + key + "': " + why); };
    if (!(c.field_mm > 0.0)) fail("field_mm", "must be positive, got " + csv::fmt_exact(c.field_mm));
    if (c.output_dir.empty()) fail("output_dir", "must not be empty");
    if (c.synth.image_size < 8) fail("synth.image_size", "must be at least 8");
    if (!(c.synth.field_mm > 0.0)) fail("synth.field_mm", "must be positive");
    if (c.train_qa.max_epochs == 0) fail("train_qa.max_epochs", "must be positive");
    if (c.train_qa.batch_size == 0) fail("train_qa.batch_size", "must be positive");
    if (!(c.train_qa.lr > 0.0)) fail("train_qa.lr", "must be positive");
    if (!(c.train_qa.t_max > 0.0)) fail("train_qa.t_max", "must be positive");
    if (c.train_qa.hflip_probability < 0.0 || c.train_qa.hflip_probability > 1.0)
        fail("train_qa.hflip_probability", "must lie in [0,1]");
    if (c.train_qa.max_rotation_deg < 0.0 || c.train_qa.max_rotation_deg > 180.0)
        fail("train_qa.max_rotation_deg", "must lie in [0,180]");
    if (c.train_seg.folds < 2) fail("train_seg.folds", "must be at least 2");
    if (c.train_seg.max_epochs == 0) fail("train_seg.max_epochs", "must be positive");
    if (c.train_seg.batch_size == 0) fail("train_seg.batch_size", "must be positive");
    if (!(c.train_seg.lr > 0.0)) fail("train_seg.lr", "must be positive");
    if (c.train_seg.momentum < 0.0 || c.train_seg.momentum >= 1.0) fail("train_seg.momentum", "must lie in [0,1)");
    if (!(c.train_seg.poly_exponent > 0.0)) fail("train_seg.poly_exponent", "must be positive");
    if (c.partition.scheme != "holdout" && c.partition.scheme != "kfold")
        fail("partition.scheme", "must be 'holdout' or 'kfold'");
    if (c.partition.scheme == "holdout") {
        if (c.partition.names.empty() || c.partition.names.size() != c.partition.weights.size())
            fail("partition.weights", "needs one weight per name");
        for (double w : c.partition.weights)
            if (!(w >= 0.0)) fail("partition.weights", "must be non-negative");
    } else if (c.partition.k < 2) {
        fail("partition.k", "must be at least 2");
    }
    try {
        c.synth.validate();
        c.train_qa.net.validate();
        c.train_seg.net.validate();
    } catch (const SpecError& e) {
        throw ConfigError(e.what());
    }
}

/// Defaults are kept for absent keys; unknown keys are errors.
inline PipelineConfig config_from_json(const json& j) {
    using detail::read;
    detail::reject_unknown(j,
                           {"input_dir", "manifest", "split", "field_mm", "classifier_checkpoint", "segmenter_checkpoint",
                            "output_dir", "threads", "seed", "synth", "train_qa", "train_seg", "partition", "eval"},
                           "");
    PipelineConfig c;
    read(j, "input_dir", c.input_dir, "");
    read(j, "manifest", c.manifest, "");
    read(j, "split", c.split, "");
    read(j, "field_mm", c.field_mm, "");
    read(j, "classifier_checkpoint", c.classifier_checkpoint, "");
    read(j, "segmenter_checkpoint", c.segmenter_checkpoint, "");
    read(j, "output_dir", c.output_dir, "");
    read(j, "threads", c.threads, "");
    read(j, "seed", c.seed, "");

    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        detail::reject_unknown(s,
                               {"counts", "image_size", "field_mm", "gradable_blur", "ungradable_blur",
                                "slight_stripe_max", "moderate_stripe", "stripe_period", "ungradable_offset",
                                "centre_jitter", "faz_semi_axis_mm"},
                               "synth");
        read(s, "counts", c.synth.counts, "synth");
        read(s, "image_size", c.synth.image_size, "synth");
        read(s, "field_mm", c.synth.field_mm, "synth");
        detail::read_range(s, "gradable_blur", c.synth.gradable_blur, "synth");
        detail::read_range(s, "ungradable_blur", c.synth.ungradable_blur, "synth");
        read(s, "slight_stripe_max", c.synth.slight_stripe_max, "synth");
        detail::read_range(s, "moderate_stripe", c.synth.moderate_stripe, "synth");
        detail::read_range(s, "stripe_period", c.synth.stripe_period, "synth");
        detail::read_range(s, "ungradable_offset", c.synth.ungradable_offset, "synth");
        read(s, "centre_jitter", c.synth.centre_jitter, "synth");
        detail::read_range(s, "faz_semi_axis_mm", c.synth.faz_semi_axis_mm, "synth");
    }
    if (j.contains("train_qa")) {
        const auto& q = j.at("train_qa");
        detail::reject_unknown(q,
                               {"net", "max_epochs", "batch_size", "lr", "t_max", "patience", "augment",
                                "hflip_probability", "max_rotation_deg", "train_split", "val_split"},
                               "train_qa");
        detail::read_net(q, c.train_qa.net, "train_qa");
        read(q, "max_epochs", c.train_qa.max_epochs, "train_qa");
        read(q, "batch_size", c.train_qa.batch_size, "train_qa");
        read(q, "lr", c.train_qa.lr, "train_qa");
        read(q, "t_max", c.train_qa.t_max, "train_qa");
        read(q, "patience", c.train_qa.patience, "train_qa");
        read(q, "augment", c.train_qa.augment, "train_qa");
        read(q, "hflip_probability", c.train_qa.hflip_probability, "train_qa");
        read(q, "max_rotation_deg", c.train_qa.max_rotation_deg, "train_qa");
        read(q, "train_split", c.train_qa.train_split, "train_qa");
        read(q, "val_split", c.train_qa.val_split, "train_qa");
    }
    if (j.contains("train_seg")) {
        const auto& g = j.at("train_seg");
        detail::reject_unknown(g,
                               {"net", "folds", "max_epochs", "batch_size", "lr", "momentum", "poly_exponent",
                                "patience", "augment", "split", "max_samples", "threads"},
                               "train_seg");
        detail::read_net(g, c.train_seg.net, "train_seg");
        read(g, "folds", c.train_seg.folds, "train_seg");
        read(g, "max_epochs", c.train_seg.max_epochs, "train_seg");
        read(g, "batch_size", c.train_seg.batch_size, "train_seg");
        read(g, "lr", c.train_seg.lr, "train_seg");
        read(g, "momentum", c.train_seg.momentum, "train_seg");
        read(g, "poly_exponent", c.train_seg.poly_exponent, "train_seg");
        read(g, "patience", c.train_seg.patience, "train_seg");
        read(g, "augment", c.train_seg.augment, "train_seg");
        read(g, "split", c.train_seg.split, "train_seg");
        read(g, "max_samples", c.train_seg.max_samples, "train_seg");
        read(g, "threads", c.train_seg.threads, "train_seg");
    }
    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        detail::reject_unknown(p, {"scheme", "names", "weights", "absolute", "k"}, "partition");
        read(p, "scheme", c.partition.scheme, "partition");
        read(p, "names", c.partition.names, "partition");
        read(p, "weights", c.partition.weights, "partition");
        read(p, "absolute", c.partition.absolute, "partition");
        read(p, "k", c.partition.k, "partition");
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::reject_unknown(e, {"report", "masks_dir"}, "eval");
        read(e, "report", c.eval.report, "eval");
        read(e, "masks_dir", c.eval.masks_dir, "eval");
    }
    c.propagate();
    validate(c);
    return c;
}

inline PipelineConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

/// Relative paths in the file are resolved against the file's directory.
inline PipelineConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    PipelineConfig c;
    try {
        c = parse_config(imaging::read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    for (std::string* p : {&c.input_dir, &c.manifest, &c.classifier_checkpoint, &c.segmenter_checkpoint, &c.output_dir,
                           &c.eval.report, &c.eval.masks_dir})
        if (!p->empty() && std::filesystem::path(*p).is_relative() && !base.empty()) *p = (base / *p).string();
    return c;
}

inline std::string emit_config(const PipelineConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Checks that the paths a command reads exist.
inline void validate_for(const PipelineConfig& c, Command cmd) {
    namespace fs = std::filesystem;
    auto need = [](const std::string& key, const std::string& value) {
        if (value.empty()) throw ConfigError("key '" + key + "' is required for this command");
        if (!fs::exists(value)) throw ConfigError("key '" + key + "': path does not exist: " + value);
    };
    auto need_input = [&] {
        if (c.manifest.empty() && c.input_dir.empty())
            throw ConfigError("one of 'manifest' or 'input_dir' is required for this command");
        if (!c.manifest.empty()) need("manifest", c.manifest);
        if (!c.input_dir.empty()) need("input_dir", c.input_dir);
    };
    switch (cmd) {
        case Command::Synth:
            break;
        case Command::Split:
        case Command::TrainQa:
        case Command::TrainSeg:
            need("manifest", c.manifest);
            break;
        case Command::Assess:
            need_input();
            need("classifier_checkpoint", c.classifier_checkpoint);
            break;
        case Command::Segment:
            need_input();
            need("segmenter_checkpoint", c.segmenter_checkpoint);
            break;
        case Command::Quantify:
            need_input();
            break;
        case Command::Pipeline:
            need_input();
            need("classifier_checkpoint", c.classifier_checkpoint);
            need("segmenter_checkpoint", c.segmenter_checkpoint);
            break;
        case Command::Eval:
            need("manifest", c.manifest);
            need("eval.report", c.eval.report);
            break;
    }
}

}  // namespace coips::pipeline
