#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "coips/errors.hpp"
#include "coips/util/rng.hpp"

namespace coips::pipeline {

/// Named parts sized by relative weight (ratios) or by absolute counts.
struct HoldoutScheme {
    std::vector<std::string> names;
    std::vector<double> weights;
    bool absolute = false;  // weights are counts; leftovers join the first part
};

/// Training / testing / internal / external proportions of the 3x3 quality set.
inline HoldoutScheme table3_holdout() {
    return {{"train", "test", "internal_test", "external_test"}, {6915, 2965, 300, 300}, false};
}

struct KFoldScheme {
    std::size_t k = 5;
};

using SplitScheme = std::variant<HoldoutScheme, KFoldScheme>;

/// Per-id assignment, in the order ids were given.
struct DatasetSplit {
    std::vector<std::string> ids;
    std::vector<std::string> groups;  // holdout part name or "fold<i>"
    std::vector<std::size_t> fold;    // fold index (k-fold) or part index

    std::vector<std::string> members(const std::string& group) const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (groups[i] == group) out.push_back(ids[i]);
        return out;
    }

    std::map<std::string, std::size_t> sizes() const {
        std::map<std::string, std::size_t> out;
        for (const auto& g : groups) ++out[g];
        return out;
    }
};

/// Largest-remainder apportionment of `total` items by `weights`; ties go to
/// the earlier part.
inline std::vector<std::size_t> proportional_sizes(std::size_t total, const std::vector<double>& weights) {
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (weights.empty() || !(wsum > 0.0)) throw ConfigError("split weights must be positive");
    std::vector<std::size_t> sizes(weights.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) throw ConfigError("split weights must be non-negative");
        const double exact = static_cast<double>(total) * weights[i] / wsum;
        sizes[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += sizes[i];
        rem.emplace_back(exact - static_cast<double>(sizes[i]), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++sizes[rem[j % rem.size()].second];
    return sizes;
}

/// Seeded shuffle followed by contiguous partition.
inline DatasetSplit split_dataset(const std::vector<std::string>& ids, const SplitScheme& scheme, std::uint64_t seed) {
    if (ids.empty()) throw ConfigError("cannot split an empty id list");
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) throw ConfigError("ids must be unique");
    std::vector<std::string> names;
    std::vector<std::size_t> sizes;
    if (const auto* h = std::get_if<HoldoutScheme>(&scheme)) {
        if (h->names.size() != h->weights.size() || h->names.empty())
            throw ConfigError("holdout scheme needs one weight per part");
        names = h->names;
        if (h->absolute) {
            double requested = 0.0;
            for (double w : h->weights) {
                if (w < 0.0 || w != std::floor(w)) throw ConfigError("holdout counts must be non-negative integers");
                requested += w;
                sizes.push_back(static_cast<std::size_t>(w));
            }
            if (requested > static_cast<double>(ids.size()))
                throw ConfigError("requested " + std::to_string(static_cast<std::size_t>(requested)) +
                                  " ids but only " + std::to_string(ids.size()) + " available");
            sizes[0] += ids.size() - static_cast<std::size_t>(requested);
        } else {
            sizes = proportional_sizes(ids.size(), h->weights);
        }
    } else {
        const auto k = std::get<KFoldScheme>(scheme).k;
        if (k < 2) throw ConfigError("k-fold needs k >= 2");
        if (k > ids.size())
            throw ConfigError("cannot form " + std::to_string(k) + " folds from " + std::to_string(ids.size()) + " ids");
        for (std::size_t i = 0; i < k; ++i) names.push_back("fold" + std::to_string(i));
        sizes = proportional_sizes(ids.size(), std::vector<double>(k, 1.0));
    }
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5B117));
    rng.shuffle(order.begin(), order.end());

    DatasetSplit out;
    out.ids = ids;
    out.groups.resize(ids.size());
    out.fold.resize(ids.size());
    std::size_t pos = 0;
    for (std::size_t part = 0; part < sizes.size(); ++part)
        for (std::size_t j = 0; j < sizes[part]; ++j, ++pos) {
            out.groups[order[pos]] = names[part];
            out.fold[order[pos]] = part;
        }
    return out;
}

/// Applies the scheme separately within each label so every part keeps the
/// label mix of the whole.
inline DatasetSplit split_stratified(const std::vector<std::string>& ids, const std::vector<int>& labels,
                                     const SplitScheme& scheme, std::uint64_t seed) {
    if (ids.size() != labels.size()) throw ConfigError("ids and labels differ in length");
    DatasetSplit out;
    out.ids = ids;
    out.groups.resize(ids.size());
    out.fold.resize(ids.size());
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ids.size(); ++i) by_label[labels[i]].push_back(i);
    for (const auto& [label, idx] : by_label) {
        std::vector<std::string> sub;
        for (auto i : idx) sub.push_back(ids[i]);
        const auto part = split_dataset(sub, scheme, derive_seed(seed, static_cast<std::uint64_t>(label)));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            out.groups[idx[j]] = part.groups[j];
            out.fold[idx[j]] = part.fold[j];
        }
    }
    return out;
}

}  // namespace coips::pipeline
