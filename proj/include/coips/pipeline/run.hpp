#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "coips/imaging/codec.hpp"
#include "coips/manifest.hpp"
#include "coips/metrics/classification.hpp"
#include "coips/metrics/segmentation.hpp"
#include "coips/pipeline/config.hpp"
#include "coips/qa/classifier.hpp"
#include "coips/report/plots.hpp"
#include "coips/report/report.hpp"
#include "coips/seg/segmenter.hpp"
#include "coips/util/parallel.hpp"

namespace coips::pipeline {

namespace fs = std::filesystem;
using report::ReportRecord;

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitFatal = 2;

struct InputImage {
    std::string source_id;
    fs::path path;
    double field_mm = 3.0;
    std::string modality;
    std::string sibling_id;
};

struct RunOutcome {
    std::vector<ReportRecord> records;  // sorted by source_id
    std::size_t failed = 0;

    int exit_code() const { return failed ? kExitPartial : kExitSuccess; }
};

inline bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

/// Manifest rows (optionally one split) or every image file in input_dir,
/// ordered by source_id.
inline std::vector<InputImage> collect_inputs(const PipelineConfig& cfg) {
    std::vector<InputImage> out;
    if (!cfg.manifest.empty()) {
        const auto m = load_manifest(cfg.manifest, cfg.field_mm);
        for (const auto* row : m.in_split(cfg.split))
            out.push_back({row->source_id, m.resolve(row->image_path), row->field_mm, row->modality, row->sibling_id});
    } else {
        if (!fs::is_directory(cfg.input_dir)) throw ConfigError("key 'input_dir': not a directory: " + cfg.input_dir);
        for (const auto& entry : fs::directory_iterator(cfg.input_dir))
            if (entry.is_regular_file() && is_image_file(entry.path()))
                out.push_back({entry.path().stem().string(), entry.path(), cfg.field_mm, {}, {}});
    }
    std::sort(out.begin(), out.end(), [](const InputImage& a, const InputImage& b) { return a.source_id < b.source_id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].source_id == out[i - 1].source_id) throw ConfigError("duplicate source_id '" + out[i].source_id + "'");
    return out;
}

/// Classifies every input. A dOCTA image whose sOCTA sibling is in the batch
/// and was assessed takes the sibling's category and probabilities.
inline std::vector<ReportRecord> assess_images(const std::vector<InputImage>& inputs, const qa::Network& net,
                                               std::size_t threads) {
    std::vector<ReportRecord> records(inputs.size());
    parallel_for(inputs.size(), threads, [&](std::size_t i) {
        const auto& in = inputs[i];
        auto& r = records[i];
        r.source_id = in.source_id;
        r.field_mm = in.field_mm;
        try {
            const auto img = imaging::load_image(in.path, in.field_mm, in.source_id);
            r.height = img.height();
            r.width = img.width();
            const auto label = qa::predict_quality(net, qa::preprocess(img, net.spec()));
            r.category = label.category;
            r.probs = *label.probs;
        } catch (const Error& e) {
            r.error = e.what();
        }
    });
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < inputs.size(); ++i) index[inputs[i].source_id] = i;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].modality != "docta" || inputs[i].sibling_id.empty() || records[i].failed()) continue;
        auto it = index.find(inputs[i].sibling_id);
        if (it == index.end() || records[it->second].failed()) continue;
        records[i].category = records[it->second].category;
        records[i].probs = records[it->second].probs;
    }
    return records;
}

/// Segments every assessed, non-Ungradable image and writes masks/<id>.png.
/// Any stale mask of a gated or failed image is removed.
inline void segment_images(const std::vector<InputImage>& inputs, std::vector<ReportRecord>& records,
                           const seg::Network& net, std::size_t threads, const fs::path& masks_dir) {
    if (inputs.size() != records.size()) throw InternalError("inputs and records differ in length");
    fs::create_directories(masks_dir);
    parallel_for(inputs.size(), threads, [&](std::size_t i) {
        auto& r = records[i];
        const fs::path mask_path = masks_dir / (r.source_id + ".png");
        if (r.failed() || r.category == Quality::Ungradable) {
            std::error_code ec;
            fs::remove(mask_path, ec);
            return;
        }
        try {
            const auto img = imaging::load_image(inputs[i].path, inputs[i].field_mm, inputs[i].source_id);
            if (img.height() != img.width())
                throw GeometryError("FAZ area needs a square image, got " + std::to_string(img.height()) + "x" +
                                    std::to_string(img.width()));
            const auto mask = seg::predict_mask(net, seg::preprocess(img, net.config()), img.height(), img.width());
            r.faz_pixels = mask.foreground_count();
            r.segmented = true;
            imaging::write_file(mask_path, imaging::encode_mask_png(mask));
        } catch (const Error& e) {
            r.error = e.what();
            r.segmented = false;
            r.faz_pixels.reset();
            std::error_code ec;
            fs::remove(mask_path, ec);
        }
    });
}

inline qa::Network load_classifier(const std::string& path) {
    return qa::from_checkpoint(tensor::load_checkpoint(path));
}

inline seg::Network load_segmenter(const std::string& path) {
    return seg::from_checkpoint(tensor::load_checkpoint(path));
}

// ---- assessment file (output of `assess`, input of `segment`) ----

inline std::string assessment_json(const std::vector<ReportRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records)
        arr.push_back({{"source_id", r.source_id},
                       {"category", to_string(r.category)},
                       {"probs", r.probs},
                       {"width", r.width},
                       {"height", r.height},
                       {"field_mm", r.field_mm},
                       {"error", r.error}});
    return arr.dump(2) + "\n";
}

inline std::vector<ReportRecord> parse_assessment_json(const std::string& text) {
    std::vector<ReportRecord> out;
    try {
        for (const auto& j : nlohmann::json::parse(text)) {
            ReportRecord r;
            r.source_id = j.at("source_id").get<std::string>();
            r.category = parse_quality(j.at("category").get<std::string>());
            r.probs = j.at("probs").get<std::array<double, 3>>();
            r.width = j.at("width").get<std::size_t>();
            r.height = j.at("height").get<std::size_t>();
            r.field_mm = j.at("field_mm").get<double>();
            r.error = j.at("error").get<std::string>();
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("assessment JSON: ") + e.what());
    }
    return out;
}

/// report.csv, report.json, summary.json and plots/ under `dir`.
inline void write_report(std::vector<ReportRecord>& records, const fs::path& dir) {
    report::sort_records(records);
    const auto bytes = report::make_report(records);
    imaging::write_file(dir / "report.csv", bytes.csv);
    imaging::write_file(dir / "report.json", bytes.json);
    const auto summary = report::summary(records);
    imaging::write_file(dir / "summary.json", summary.dump(2) + "\n");
    const auto& cats = summary.at("categories");
    const std::vector<std::string> names{"ungradable", "gradable", "outstanding"};
    std::vector<double> counts;
    std::string csv_text = "category,count\n";
    for (const auto& n : names) {
        counts.push_back(cats.at(n).get<double>());
        csv_text += n + "," + std::to_string(cats.at(n).get<std::size_t>()) + "\n";
    }
    imaging::write_file(dir / "plots" / "categories.csv", csv_text);
    imaging::write_file(dir / "plots" / "categories.svg", report::bar_chart_svg(names, counts, "Quality categories"));
}

inline RunOutcome finish(std::vector<ReportRecord> records) {
    RunOutcome out;
    report::sort_records(records);
    for (const auto& r : records) out.failed += r.failed();
    out.records = std::move(records);
    return out;
}

/// Quality assessment only; writes assessment.json.
inline RunOutcome run_assess(const PipelineConfig& cfg) {
    const auto net = load_classifier(cfg.classifier_checkpoint);
    const auto inputs = collect_inputs(cfg);
    auto records = assess_images(inputs, net, resolve_threads(cfg.threads));
    imaging::write_file(fs::path(cfg.output_dir) / "assessment.json", assessment_json(records));
    return finish(std::move(records));
}

/// Segmentation and reporting from a previous assessment.json in output_dir.
inline RunOutcome run_segment(const PipelineConfig& cfg) {
    const fs::path out_dir(cfg.output_dir);
    const fs::path assessment = out_dir / "assessment.json";
    if (!fs::exists(assessment)) throw ConfigError("no assessment found at " + assessment.string() + "; run assess first");
    const auto net = load_segmenter(cfg.segmenter_checkpoint);
    const auto inputs = collect_inputs(cfg);
    auto records = parse_assessment_json(imaging::read_file(assessment));
    if (records.size() != inputs.size()) throw ConfigError("assessment does not match the configured inputs");
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (records[i].source_id != inputs[i].source_id)
            throw ConfigError("assessment does not match the configured inputs at " + inputs[i].source_id);
    segment_images(inputs, records, net, resolve_threads(cfg.threads), out_dir / "masks");
    write_report(records, out_dir);
    return finish(std::move(records));
}

/// Full flow: assess, gate, segment, quantify, report.
inline RunOutcome run_pipeline(const PipelineConfig& cfg) {
    const auto qa_net = load_classifier(cfg.classifier_checkpoint);
    const auto seg_net = load_segmenter(cfg.segmenter_checkpoint);
    const auto inputs = collect_inputs(cfg);
    const std::size_t threads = resolve_threads(cfg.threads);
    const fs::path out_dir(cfg.output_dir);
    auto records = assess_images(inputs, qa_net, threads);
    imaging::write_file(out_dir / "assessment.json", assessment_json(records));
    segment_images(inputs, records, seg_net, threads, out_dir / "masks");
    write_report(records, out_dir);
    return finish(std::move(records));
}

struct QuantifyRow {
    std::string source_id;
    std::size_t faz_pixels = 0;
    double faz_area_mm2 = 0.0;
    std::size_t width = 0, height = 0;
    double field_mm = 3.0;
    std::string error;
};

/// FAZ area of existing masks: manifest mask_path column, or every image in
/// input_dir read as a mask. Writes quantify.csv.
inline std::pair<std::vector<QuantifyRow>, int> run_quantify(const PipelineConfig& cfg) {
    std::vector<std::pair<std::string, fs::path>> masks;
    std::vector<double> fields;
    if (!cfg.manifest.empty()) {
        const auto m = load_manifest(cfg.manifest, cfg.field_mm);
        for (const auto* row : m.in_split(cfg.split))
            if (!row->mask_path.empty()) {
                masks.emplace_back(row->source_id, m.resolve(row->mask_path));
                fields.push_back(row->field_mm);
            }
    } else {
        for (const auto& e : fs::directory_iterator(cfg.input_dir))
            if (e.is_regular_file() && is_image_file(e.path())) {
                masks.emplace_back(e.path().stem().string(), e.path());
                fields.push_back(cfg.field_mm);
            }
    }
    std::vector<QuantifyRow> rows(masks.size());
    parallel_for(masks.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
        auto& r = rows[i];
        r.source_id = masks[i].first;
        r.field_mm = fields[i];
        try {
            const auto mask = imaging::decode_mask_png(imaging::read_file(masks[i].second), r.source_id);
            r.width = mask.width;
            r.height = mask.height;
            r.faz_pixels = mask.foreground_count();
            r.faz_area_mm2 = report::faz_area(mask, r.field_mm);
        } catch (const Error& e) {
            r.error = e.what();
        }
    });
    std::sort(rows.begin(), rows.end(), [](const QuantifyRow& a, const QuantifyRow& b) { return a.source_id < b.source_id; });
    std::string text = "source_id,faz_pixels,faz_area_mm2,width,height,field_mm\n";
    std::size_t failed = 0;
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            ++failed;
            continue;
        }
        text += r.source_id + "," + std::to_string(r.faz_pixels) + "," + csv::fmt_sig(r.faz_area_mm2, 6) + "," +
                std::to_string(r.width) + "," + std::to_string(r.height) + "," + csv::fmt_exact(r.field_mm) + "\n";
    }
    imaging::write_file(fs::path(cfg.output_dir) / "quantify.csv", text);
    return {rows, failed ? kExitPartial : kExitSuccess};
}

/// Scores a report against manifest ground truth. Writes metrics.json and
/// ROC/confusion CSV and SVG files under plots/.
inline nlohmann::json run_eval(const PipelineConfig& cfg) {
    const auto m = load_manifest(cfg.manifest, cfg.field_mm);
    const auto predictions = report::parse_json_text(imaging::read_file(cfg.eval.report));
    const fs::path masks_dir =
        cfg.eval.masks_dir.empty() ? fs::path(cfg.eval.report).parent_path() / "masks" : fs::path(cfg.eval.masks_dir);
    std::map<std::string, const ReportRecord*> by_id;
    for (const auto& r : predictions) by_id[r.source_id] = &r;

    std::vector<int> y_true, y_pred;
    std::vector<std::array<double, 3>> probs;
    std::vector<std::string> missing;
    std::vector<double> dice, jac, prec, rec;
    for (const auto* row : m.in_split(cfg.split)) {
        if (!row->label) continue;
        auto it = by_id.find(row->source_id);
        if (it == by_id.end()) {
            missing.push_back(row->source_id);
            continue;
        }
        const auto& p = *it->second;
        y_true.push_back(static_cast<int>(*row->label));
        y_pred.push_back(static_cast<int>(p.category));
        probs.push_back(p.probs);
        if (*row->label == Quality::Ungradable || row->mask_path.empty() || !p.segmented) continue;
        const fs::path pred_path = masks_dir / (row->source_id + ".png");
        if (!fs::exists(pred_path)) continue;
        const auto gt = imaging::decode_mask_png(imaging::read_file(m.resolve(row->mask_path)), row->source_id);
        const auto sr = imaging::decode_mask_png(imaging::read_file(pred_path), row->source_id);
        dice.push_back(metrics::dice_coefficient(sr, gt));
        jac.push_back(metrics::jaccard(sr, gt));
        try {
            prec.push_back(metrics::seg_precision(sr, gt));
        } catch (const UndefinedMetricError&) {
        }
        try {
            rec.push_back(metrics::seg_recall(sr, gt));
        } catch (const UndefinedMetricError&) {
        }
    }
    if (y_true.empty()) throw ConfigError("no labelled manifest rows have predictions in " + cfg.eval.report);

    const std::vector<std::string> names{"ungradable", "gradable", "outstanding"};
    const auto cm = metrics::confusion_matrix(y_true, y_pred, 3);
    const auto cls = metrics::classification_report(cm);
    nlohmann::json out;
    out["classification"] = metrics::to_json(cls, names);
    out["confusion_matrix"] = cm.counts;

    const fs::path plots = fs::path(cfg.output_dir) / "plots";
    nlohmann::json auc = nlohmann::json::object();
    std::vector<std::vector<metrics::RocPoint>> curves(3);
    for (int c = 0; c < 3; ++c) {
        std::vector<double> scores;
        for (const auto& p : probs) scores.push_back(p[static_cast<std::size_t>(c)]);
        try {
            auc[names[c]] = metrics::roc_auc(scores, y_true, c);
            curves[c] = metrics::roc_curve(scores, y_true, c);
            imaging::write_file(plots / ("roc_" + names[c] + ".csv"), metrics::roc_csv(curves[c]));
        } catch (const UndefinedMetricError&) {
            auc[names[c]] = nullptr;
        }
    }
    double macro = 0.0;
    std::size_t defined = 0;
    for (const auto& n : names)
        if (!auc[n].is_null()) {
            macro += auc[n].get<double>();
            ++defined;
        }
    out["roc_auc"] = auc;
    out["macro_roc_auc"] = defined ? nlohmann::json(macro / static_cast<double>(defined)) : nlohmann::json(nullptr);

    auto mean = [](const std::vector<double>& v) -> nlohmann::json {
        if (v.empty()) return nullptr;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    out["segmentation"] = {{"images", dice.size()},
                           {"dice", mean(dice)},
                           {"jaccard", mean(jac)},
                           {"precision", mean(prec)},
                           {"recall", mean(rec)}};
    out["missing_predictions"] = missing;

    imaging::write_file(fs::path(cfg.output_dir) / "metrics.json", out.dump(2) + "\n");
    imaging::write_file(plots / "confusion.csv", metrics::confusion_csv(cm, names));
    imaging::write_file(plots / "confusion.svg", report::confusion_svg(cm, names));
    imaging::write_file(plots / "roc.svg", report::roc_svg(curves, names));
    return out;
}

}  // namespace coips::pipeline
