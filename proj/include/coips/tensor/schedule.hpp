#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <variant>

#include "coips/errors.hpp"

namespace coips::tensor {

/// lr_min + (lr0 - lr_min)(1 + cos(pi t / t_max)) / 2 on [0, t_max].
struct CosineAnnealing {
    double t_max = 5;
    double lr_min = 0.0;
};

/// lr0 (1 - t / total)^exponent on [0, total].
struct PolyDecay {
    double total = 100;
    double exponent = 0.9;
};

using LrSchedule = std::variant<CosineAnnealing, PolyDecay>;

inline double learning_rate(const LrSchedule& schedule, double lr0, double t) {
    if (!(lr0 > 0.0)) throw RangeError("initial learning rate must be positive");
    if (t < 0.0) throw RangeError("schedule step must be non-negative");
    return std::visit(
        [&](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, CosineAnnealing>) {
                if (!(s.t_max > 0.0)) throw RangeError("cosine schedule needs t_max > 0");
                if (t > s.t_max)
                    throw RangeError("step " + std::to_string(t) + " beyond cosine horizon " + std::to_string(s.t_max));
                return s.lr_min + 0.5 * (lr0 - s.lr_min) * (1.0 + std::cos(std::numbers::pi * t / s.t_max));
            } else {
                if (!(s.total > 0.0)) throw RangeError("poly schedule needs a positive horizon");
                if (t > s.total)
                    throw RangeError("step " + std::to_string(t) + " beyond poly horizon " + std::to_string(s.total));
                return lr0 * std::pow(1.0 - t / s.total, s.exponent);
            }
        },
        schedule);
}

}  // namespace coips::tensor
