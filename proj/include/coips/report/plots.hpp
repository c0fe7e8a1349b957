#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "coips/metrics/classification.hpp"
#include "coips/util/csv.hpp"

namespace coips::report {

namespace detail {

inline std::string num(double v) { return csv::fmt_sig(v, 6); }

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string open_svg(int w, int h, const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
           "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + std::to_string(w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
           "</text>\n";
}

inline const char* palette(std::size_t i) {
    static const char* colours[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"};
    return colours[i % 5];
}

}  // namespace detail

inline std::string bar_chart_svg(const std::vector<std::string>& labels, const std::vector<double>& values,
                                 const std::string& title) {
    const int w = 480, h = 320, left = 50, bottom = 40, top = 40;
    const double vmax = std::max(1.0, values.empty() ? 1.0 : *std::max_element(values.begin(), values.end()));
    const double plot_h = h - top - bottom;
    const double slot = labels.empty() ? 0.0 : static_cast<double>(w - left - 20) / static_cast<double>(labels.size());
    std::string out = detail::open_svg(w, h, title);
    out += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(h - bottom) + "\" x2=\"" +
           std::to_string(w - 20) + "\" y2=\"" + std::to_string(h - bottom) + "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double bh = plot_h * values[i] / vmax;
        const double x = left + slot * static_cast<double>(i) + slot * 0.15;
        out += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(h - bottom - bh) + "\" width=\"" +
               detail::num(slot * 0.7) + "\" height=\"" + detail::num(bh) + "\" fill=\"" + detail::palette(i) + "\"/>\n";
        out += "<text x=\"" + detail::num(x + slot * 0.35) + "\" y=\"" + std::to_string(h - bottom + 16) +
               "\" text-anchor=\"middle\">" + detail::escape(labels[i]) + "</text>\n";
        out += "<text x=\"" + detail::num(x + slot * 0.35) + "\" y=\"" + detail::num(h - bottom - bh - 4) +
               "\" text-anchor=\"middle\">" + detail::num(values[i]) + "</text>\n";
    }
    return out + "</svg>\n";
}

/// One polyline per class; `curves[i]` may be empty when the curve is undefined.
inline std::string roc_svg(const std::vector<std::vector<metrics::RocPoint>>& curves,
                           const std::vector<std::string>& names) {
    const int size = 360, margin = 50;
    const double span = size - 2 * margin;
    std::string out = detail::open_svg(size, size + 40, "ROC");
    out += "<rect x=\"" + std::to_string(margin) + "\" y=\"" + std::to_string(margin) + "\" width=\"" + detail::num(span) +
           "\" height=\"" + detail::num(span) + "\" fill=\"none\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + std::to_string(margin) + "\" y1=\"" + std::to_string(size - margin) + "\" x2=\"" +
           std::to_string(size - margin) + "\" y2=\"" + std::to_string(margin) +
           "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    for (std::size_t c = 0; c < curves.size(); ++c) {
        if (curves[c].empty()) continue;
        out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(c)) + "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < curves[c].size(); ++i) {
            const auto& p = curves[c][i];
            out += (i ? " " : "") + detail::num(margin + p.fpr * span) + "," + detail::num(size - margin - p.tpr * span);
        }
        out += "\"/>\n";
        out += "<text x=\"" + std::to_string(margin + 10) + "\" y=\"" + std::to_string(size + 4 + 14 * static_cast<int>(c)) +
               "\" fill=\"" + detail::palette(c) + "\">" + detail::escape(names[c]) + "</text>\n";
    }
    out += "<text x=\"" + std::to_string(size / 2) + "\" y=\"" + std::to_string(size - margin + 30) +
           "\" text-anchor=\"middle\">false positive rate</text>\n";
    return out + "</svg>\n";
}

inline std::string confusion_svg(const metrics::ConfusionMatrix& cm, const std::vector<std::string>& names) {
    const int cell = 70, left = 110, top = 60;
    const int w = left + cell * static_cast<int>(cm.k) + 20, h = top + cell * static_cast<int>(cm.k) + 40;
    std::size_t peak = 1;
    for (auto v : cm.counts) peak = std::max(peak, v);
    std::string out = detail::open_svg(w, h, "Confusion matrix (rows: truth)");
    for (std::size_t i = 0; i < cm.k; ++i) {
        out += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(top + cell * static_cast<int>(i) + cell / 2) +
               "\" text-anchor=\"end\">" + detail::escape(names[i]) + "</text>\n";
        out += "<text x=\"" + std::to_string(left + cell * static_cast<int>(i) + cell / 2) + "\" y=\"" +
               std::to_string(top + cell * static_cast<int>(cm.k) + 16) + "\" text-anchor=\"middle\">" +
               detail::escape(names[i]) + "</text>\n";
        for (std::size_t j = 0; j < cm.k; ++j) {
            const double shade = static_cast<double>(cm.at(i, j)) / static_cast<double>(peak);
            const int level = 255 - static_cast<int>(shade * 200);
            out += "<rect x=\"" + std::to_string(left + cell * static_cast<int>(j)) + "\" y=\"" +
                   std::to_string(top + cell * static_cast<int>(i)) + "\" width=\"" + std::to_string(cell) + "\" height=\"" +
                   std::to_string(cell) + "\" fill=\"rgb(" + std::to_string(level) + "," + std::to_string(level) +
                   ",255)\" stroke=\"white\"/>\n";
            out += "<text x=\"" + std::to_string(left + cell * static_cast<int>(j) + cell / 2) + "\" y=\"" +
                   std::to_string(top + cell * static_cast<int>(i) + cell / 2 + 4) + "\" text-anchor=\"middle\">" +
                   std::to_string(cm.at(i, j)) + "</text>\n";
        }
    }
    return out + "</svg>\n";
}

}  // namespace coips::report
