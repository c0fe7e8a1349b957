#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "coips/errors.hpp"

namespace coips::nn {

using json = nlohmann::json;

/// Small pluggable CNN: stages of [conv k×k -> instance norm -> relu -> maxpool 2]
/// followed by a linear head.
struct ClassifierSpec {
    std::size_t input_channels = 1;
    std::size_t input_size = 64;
    std::vector<std::size_t> stage_channels{8, 16, 32, 64};
    std::size_t kernel = 3;
    std::size_t num_classes = 3;
    std::uint64_t seed = 42;

    std::size_t feature_size() const { return input_size >> stage_channels.size(); }

    void validate() const {
        if (num_classes != 3) throw SpecError("quality classifier must emit 3 logits, spec asks for " + std::to_string(num_classes));
        if (input_channels != 1 && input_channels != 3) throw SpecError("input_channels must be 1 or 3");
        if (stage_channels.empty()) throw SpecError("classifier needs at least one stage");
        for (auto c : stage_channels)
            if (c == 0) throw SpecError("stage channel counts must be positive");
        if (kernel % 2 == 0) throw SpecError("kernel size must be odd");
        if (stage_channels.size() >= 31 || input_size % (std::size_t{1} << stage_channels.size()) != 0 ||
            feature_size() == 0)
            throw SpecError("input_size " + std::to_string(input_size) + " not divisible by 2^" +
                            std::to_string(stage_channels.size()));
    }
};

/// U-shaped encoder/decoder geometry and the CE weight of the combined loss.
struct UNetConfig {
    std::size_t patch_h = 64;
    std::size_t patch_w = 64;
    std::size_t poolings = 4;
    std::size_t kernel = 3;
    std::size_t base_channels = 8;
    double growth = 2.0;
    std::size_t max_channels = 64;
    std::size_t input_channels = 1;
    double lambda = 0.5;
    std::uint64_t seed = 42;

    /// Channel width of encoder stage `level` (level == poolings is the bottleneck).
    std::size_t channels_at(std::size_t level) const {
        const double c = static_cast<double>(base_channels) * std::pow(growth, static_cast<double>(level));
        return std::min<std::size_t>(max_channels, static_cast<std::size_t>(std::llround(c)));
    }

    void validate() const {
        if (poolings >= 31) throw ConfigError("too many poolings");
        const std::size_t div = std::size_t{1} << poolings;
        if (patch_h == 0 || patch_w == 0 || patch_h % div != 0 || patch_w % div != 0)
            throw ConfigError("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                              " not divisible by 2^" + std::to_string(poolings));
        if (kernel % 2 == 0) throw ConfigError("kernel size must be odd");
        if (base_channels == 0 || max_channels == 0) throw ConfigError("channel counts must be positive");
        if (!(growth >= 1.0)) throw ConfigError("channel growth must be >= 1");
        if (input_channels != 1 && input_channels != 3) throw ConfigError("input_channels must be 1 or 3");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
    }
};

using NetSpec = std::variant<ClassifierSpec, UNetConfig>;

namespace detail {
inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw SpecError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw SpecError("unknown key '" + it.key() + "' in " + where);
}
}  // namespace detail

inline json to_json(const ClassifierSpec& s) {
    return json{{"kind", "classifier"},         {"input_channels", s.input_channels},
                {"input_size", s.input_size},    {"stage_channels", s.stage_channels},
                {"kernel", s.kernel},            {"num_classes", s.num_classes},
                {"seed", s.seed}};
}

inline json to_json(const UNetConfig& c) {
    return json{{"kind", "unet"},
                {"patch", {c.patch_h, c.patch_w}},
                {"poolings", c.poolings},
                {"kernel", c.kernel},
                {"base_channels", c.base_channels},
                {"growth", c.growth},
                {"max_channels", c.max_channels},
                {"input_channels", c.input_channels},
                {"lambda", c.lambda},
                {"seed", c.seed}};
}

inline json to_json(const NetSpec& spec) {
    return std::visit([](const auto& s) { return to_json(s); }, spec);
}

/// Reads fields present in `j` over the defaults already in `s`.
inline void merge_json(const json& j, ClassifierSpec& s) {
    detail::reject_unknown(j, {"kind", "input_channels", "input_size", "stage_channels", "kernel", "num_classes", "seed"},
                           "classifier spec");
    try {
        if (j.contains("input_channels")) s.input_channels = j.at("input_channels").get<std::size_t>();
        if (j.contains("input_size")) s.input_size = j.at("input_size").get<std::size_t>();
        if (j.contains("stage_channels")) s.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
        if (j.contains("kernel")) s.kernel = j.at("kernel").get<std::size_t>();
        if (j.contains("num_classes")) s.num_classes = j.at("num_classes").get<std::size_t>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw SpecError(std::string("classifier spec: ") + e.what());
    }
}

inline void merge_json(const json& j, UNetConfig& c) {
    detail::reject_unknown(j,
                           {"kind", "patch", "poolings", "kernel", "base_channels", "growth", "max_channels",
                            "input_channels", "lambda", "seed"},
                           "unet config");
    try {
        if (j.contains("patch")) {
            const auto p = j.at("patch").get<std::vector<std::size_t>>();
            if (p.size() != 2) throw ConfigError("unet config: patch must be [H, W]");
            c.patch_h = p[0];
            c.patch_w = p[1];
        }
        if (j.contains("poolings")) c.poolings = j.at("poolings").get<std::size_t>();
        if (j.contains("kernel")) c.kernel = j.at("kernel").get<std::size_t>();
        if (j.contains("base_channels")) c.base_channels = j.at("base_channels").get<std::size_t>();
        if (j.contains("growth")) c.growth = j.at("growth").get<double>();
        if (j.contains("max_channels")) c.max_channels = j.at("max_channels").get<std::size_t>();
        if (j.contains("input_channels")) c.input_channels = j.at("input_channels").get<std::size_t>();
        if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("unet config: ") + e.what());
    }
}

inline NetSpec netspec_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw SpecError("net spec needs a 'kind'");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "classifier") {
        ClassifierSpec s;
        merge_json(j, s);
        return s;
    }
    if (kind == "unet") {
        UNetConfig c;
        merge_json(j, c);
        return c;
    }
    throw SpecError("unknown net kind '" + kind + "'");
}

}  // namespace coips::nn
