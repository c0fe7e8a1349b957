#pragma once

#include <array>
#include <optional>
#include <string>

#include "coips/errors.hpp"

namespace coips {

/// Three-way image quality grade; the integer value is the class index.
enum class Quality : int { Ungradable = 0, Gradable = 1, Outstanding = 2 };

inline constexpr std::size_t kNumQualityClasses = 3;

inline const char* to_string(Quality q) {
    switch (q) {
        case Quality::Ungradable: return "ungradable";
        case Quality::Gradable: return "gradable";
        case Quality::Outstanding: return "outstanding";
    }
    return "?";
}

inline Quality quality_from_index(std::size_t i) {
    if (i >= kNumQualityClasses) throw RangeError("quality index out of range: " + std::to_string(i));
    return static_cast<Quality>(i);
}

inline Quality parse_quality(const std::string& s) {
    if (s == "ungradable" || s == "0") return Quality::Ungradable;
    if (s == "gradable" || s == "1") return Quality::Gradable;
    if (s == "outstanding" || s == "2") return Quality::Outstanding;
    throw FormatError("unknown quality category '" + s + "'");
}

struct QualityLabel {
    Quality category = Quality::Ungradable;
    std::optional<std::array<double, 3>> probs;
};

}  // namespace coips
