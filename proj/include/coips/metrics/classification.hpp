#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coips/errors.hpp"
#include "coips/util/csv.hpp"

namespace coips::metrics {

/// K×K counts; rows are true classes, columns predictions.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts;

    std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
    std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
    std::size_t trace() const {
        std::size_t t = 0;
        for (std::size_t i = 0; i < k; ++i) t += at(i, i);
        return t;
    }
    std::size_t row_sum(std::size_t i) const {
        std::size_t s = 0;
        for (std::size_t j = 0; j < k; ++j) s += at(i, j);
        return s;
    }
    std::size_t col_sum(std::size_t j) const {
        std::size_t s = 0;
        for (std::size_t i = 0; i < k; ++i) s += at(i, j);
        return s;
    }
    double accuracy() const {
        if (total() == 0) throw UndefinedMetricError("accuracy of an empty confusion matrix");
        return static_cast<double>(trace()) / static_cast<double>(total());
    }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t k) {
    if (y_true.size() != y_pred.size()) throw DimensionError("label vectors differ in length");
    if (y_true.empty()) throw UndefinedMetricError("confusion matrix of an empty label set");
    ConfusionMatrix cm{k, std::vector<std::size_t>(k * k, 0)};
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        for (int v : {y_true[i], y_pred[i]})
            if (v < 0 || static_cast<std::size_t>(v) >= k)
                throw RangeError("label " + std::to_string(v) + " outside [0," + std::to_string(k) + ")");
        ++cm.counts[static_cast<std::size_t>(y_true[i]) * k + static_cast<std::size_t>(y_pred[i])];
    }
    return cm;
}

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
    bool precision_undefined = false;  // class never predicted; precision reported as 0
    bool recall_undefined = false;     // class absent from ground truth; recall reported as 0
};

struct ClassificationReport {
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;  // mean per-class recall over present classes
    std::vector<ClassScores> per_class;
    ClassScores macro;
    ClassScores weighted;
    bool has_warnings = false;
};

inline ClassificationReport classification_report(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0) throw UndefinedMetricError("classification report of an empty confusion matrix");
    ClassificationReport r;
    r.accuracy = cm.accuracy();
    std::size_t present = 0;
    for (std::size_t c = 0; c < cm.k; ++c) {
        ClassScores s;
        const std::size_t tp = cm.at(c, c), predicted = cm.col_sum(c);
        s.support = cm.row_sum(c);
        s.precision_undefined = predicted == 0;
        s.recall_undefined = s.support == 0;
        s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        s.recall = s.support ? static_cast<double>(tp) / static_cast<double>(s.support) : 0.0;
        s.f1 = (s.precision + s.recall) > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        r.has_warnings = r.has_warnings || s.precision_undefined || s.recall_undefined;
        if (s.support) {
            r.balanced_accuracy += s.recall;
            ++present;
        }
        r.per_class.push_back(s);
    }
    r.balanced_accuracy /= static_cast<double>(std::max<std::size_t>(present, 1));
    const double k = static_cast<double>(cm.k);
    for (const auto& s : r.per_class) {
        r.macro.precision += s.precision / k;
        r.macro.recall += s.recall / k;
        r.macro.f1 += s.f1 / k;
        const double w = static_cast<double>(s.support) / static_cast<double>(total);
        r.weighted.precision += w * s.precision;
        r.weighted.recall += w * s.recall;
        r.weighted.f1 += w * s.f1;
    }
    r.macro.support = r.weighted.support = total;
    return r;
}

/// One-vs-rest AUC for `positive_class` from per-sample class scores, by the
/// rank-sum (Mann-Whitney) statistic with mid-ranks for ties.
inline double roc_auc(std::span<const double> scores, std::span<const int> y_true, int positive_class) {
    if (scores.size() != y_true.size()) throw DimensionError("scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t)
            if (y_true[idx[t]] == positive_class) {
                pos_rank_sum += mid_rank;
                ++pos;
            }
        i = j;
    }
    const std::size_t neg = scores.size() - pos;
    if (pos == 0 || neg == 0)
        throw UndefinedMetricError("AUC needs both positive and negative samples for class " +
                                   std::to_string(positive_class));
    const double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

/// Row-major [N,K] scores. Classes without both positives and negatives are
/// skipped; throws if none qualifies.
inline double macro_roc_auc(std::span<const double> scores, std::span<const int> y_true, std::size_t k) {
    if (scores.size() != y_true.size() * k) throw DimensionError("score matrix does not match labels");
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<double> col(y_true.size());
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < y_true.size(); ++i) col[i] = scores[i * k + c];
        try {
            sum += roc_auc(col, y_true, static_cast<int>(c));
            ++used;
        } catch (const UndefinedMetricError&) {
        }
    }
    if (used == 0) throw UndefinedMetricError("macro AUC undefined: no class has both positives and negatives");
    return sum / static_cast<double>(used);
}

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

/// (FPR, TPR) at every distinct score threshold, from (0,0) to (1,1).
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> y_true, int positive_class) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t pos = 0;
    for (int y : y_true) pos += y == positive_class;
    const std::size_t neg = y_true.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetricError("ROC curve needs positives and negatives");
    std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        const double thr = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == thr) {
            (y_true[idx[i]] == positive_class ? tp : fp)++;
            ++i;
        }
        pts.push_back({thr, static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return pts;
}

inline std::string roc_csv(const std::vector<RocPoint>& pts) {
    std::string out = "threshold,fpr,tpr\n";
    for (const auto& p : pts)
        out += (std::isinf(p.threshold) ? std::string("inf") : csv::fmt_exact(p.threshold)) + "," + csv::fmt_exact(p.fpr) +
               "," + csv::fmt_exact(p.tpr) + "\n";
    return out;
}

inline std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
    std::string out = "true\\pred";
    for (const auto& n : names) out += "," + n;
    out += "\n";
    for (std::size_t i = 0; i < cm.k; ++i) {
        out += names[i];
        for (std::size_t j = 0; j < cm.k; ++j) out += "," + std::to_string(cm.at(i, j));
        out += "\n";
    }
    return out;
}

inline nlohmann::json to_json(const ClassScores& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
}

inline nlohmann::json to_json(const ClassificationReport& r, const std::vector<std::string>& names) {
    nlohmann::json per = nlohmann::json::object();
    nlohmann::json warnings = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        per[names[i]] = to_json(r.per_class[i]);
        if (r.per_class[i].precision_undefined) warnings.push_back("precision of '" + names[i] + "' undefined (never predicted), reported as 0");
        if (r.per_class[i].recall_undefined) warnings.push_back("recall of '" + names[i] + "' undefined (no samples), reported as 0");
    }
    return {{"accuracy", r.accuracy},           {"balanced_accuracy", r.balanced_accuracy},
            {"per_class", per},                  {"macro", to_json(r.macro)},
            {"weighted", to_json(r.weighted)},  {"warnings", warnings}};
}

}  // namespace coips::metrics
