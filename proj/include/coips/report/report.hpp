#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coips/imaging/image.hpp"
#include "coips/quality.hpp"
#include "coips/util/csv.hpp"

namespace coips::report {

/// FAZ area in mm²: pixel_count * a² / z², with a the field of view per side
/// in mm and z the raster width in pixels.
inline double faz_area(std::size_t pixel_count, double field_mm, std::size_t width) {
    if (width == 0) throw GeometryError("raster width must be positive");
    if (!(field_mm > 0.0)) throw ConfigError("field_mm must be positive");
    return static_cast<double>(pixel_count) * field_mm * field_mm / (static_cast<double>(width) * static_cast<double>(width));
}

/// Rejects non-square masks, where a single horizontal pixel count does not
/// describe the raster.
inline double faz_area(const imaging::FazMask& mask, double field_mm) {
    if (mask.height != mask.width)
        throw GeometryError("FAZ area needs a square mask, got " + std::to_string(mask.height) + "x" + std::to_string(mask.width));
    return faz_area(mask.foreground_count(), field_mm, mask.width);
}

/// One output row per input image.
struct ReportRecord {
    std::string source_id;
    Quality category = Quality::Ungradable;
    std::array<double, 3> probs{0, 0, 0};
    bool segmented = false;
    std::optional<std::size_t> faz_pixels;  // present iff segmented
    std::size_t width = 0;
    std::size_t height = 0;
    double field_mm = 3.0;
    std::string error;  // non-empty when the image could not be processed

    std::optional<double> faz_area_mm2() const {
        if (!faz_pixels) return std::nullopt;
        return faz_area(*faz_pixels, field_mm, width);
    }

    bool failed() const { return !error.empty(); }

    bool operator==(const ReportRecord&) const = default;
};

inline const char* kReportHeader =
    "source_id,category,p_ungradable,p_gradable,p_outstanding,segmented,faz_pixels,faz_area_mm2,width,height,field_mm";

inline void sort_records(std::vector<ReportRecord>& records) {
    std::sort(records.begin(), records.end(),
              [](const ReportRecord& a, const ReportRecord& b) { return a.source_id < b.source_id; });
}

/// CSV of successfully processed records; area at 6 significant figures.
inline std::string to_csv(const std::vector<ReportRecord>& records) {
    std::string out = std::string(kReportHeader) + "\n";
    for (const auto& r : records) {
        if (r.failed()) continue;
        const auto area = r.faz_area_mm2();
        out += csv::check_field(r.source_id) + "," + to_string(r.category) + "," + csv::fmt_exact(r.probs[0]) + "," +
               csv::fmt_exact(r.probs[1]) + "," + csv::fmt_exact(r.probs[2]) + "," + (r.segmented ? "true" : "false") +
               "," + (r.faz_pixels ? std::to_string(*r.faz_pixels) : "") + "," + (area ? csv::fmt_sig(*area, 6) : "") +
               "," + std::to_string(r.width) + "," + std::to_string(r.height) + "," + csv::fmt_exact(r.field_mm) + "\n";
    }
    return out;
}

/// Area is recomputed from the recorded counts, so the rounded CSV column
/// never feeds back into the record.
inline std::vector<ReportRecord> parse_csv(const std::string& text) {
    const auto t = csv::parse(text);
    if (csv::split_line(kReportHeader) != t.header) throw FormatError("unexpected report header");
    std::vector<ReportRecord> out;
    for (const auto& row : t.rows) {
        ReportRecord r;
        r.source_id = row[0];
        r.category = parse_quality(row[1]);
        for (int i = 0; i < 3; ++i) r.probs[i] = csv::parse_double(row[2 + i]);
        if (row[5] != "true" && row[5] != "false") throw FormatError("segmented must be true/false");
        r.segmented = row[5] == "true";
        if (!row[6].empty()) r.faz_pixels = static_cast<std::size_t>(csv::parse_int(row[6]));
        r.width = static_cast<std::size_t>(csv::parse_int(row[8]));
        r.height = static_cast<std::size_t>(csv::parse_int(row[9]));
        r.field_mm = csv::parse_double(row[10]);
        if (r.segmented != r.faz_pixels.has_value()) throw FormatError("row " + r.source_id + ": segmented flag disagrees with area fields");
        out.push_back(std::move(r));
    }
    return out;
}

inline nlohmann::json to_json(const ReportRecord& r) {
    nlohmann::json j{{"source_id", r.source_id},
                     {"category", to_string(r.category)},
                     {"p_ungradable", r.probs[0]},
                     {"p_gradable", r.probs[1]},
                     {"p_outstanding", r.probs[2]},
                     {"segmented", r.segmented},
                     {"faz_pixels", nullptr},
                     {"faz_area_mm2", nullptr},
                     {"width", r.width},
                     {"height", r.height},
                     {"field_mm", r.field_mm}};
    if (r.faz_pixels) {
        j["faz_pixels"] = *r.faz_pixels;
        j["faz_area_mm2"] = *r.faz_area_mm2();
    }
    return j;
}

inline std::string to_json_text(const std::vector<ReportRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records)
        if (!r.failed()) arr.push_back(to_json(r));
    return arr.dump(2) + "\n";
}

inline std::vector<ReportRecord> parse_json_text(const std::string& text) {
    std::vector<ReportRecord> out;
    try {
        for (const auto& j : nlohmann::json::parse(text)) {
            ReportRecord r;
            r.source_id = j.at("source_id").get<std::string>();
            r.category = parse_quality(j.at("category").get<std::string>());
            r.probs = {j.at("p_ungradable").get<double>(), j.at("p_gradable").get<double>(), j.at("p_outstanding").get<double>()};
            r.segmented = j.at("segmented").get<bool>();
            if (!j.at("faz_pixels").is_null()) r.faz_pixels = j.at("faz_pixels").get<std::size_t>();
            r.width = j.at("width").get<std::size_t>();
            r.height = j.at("height").get<std::size_t>();
            r.field_mm = j.at("field_mm").get<double>();
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report JSON: ") + e.what());
    }
    return out;
}

struct ReportBytes {
    std::string csv;
    std::string json;
};

inline ReportBytes make_report(const std::vector<ReportRecord>& records) { return {to_csv(records), to_json_text(records)}; }

/// Category counts, failures and area statistics of segmented rows.
inline nlohmann::json summary(const std::vector<ReportRecord>& records) {
    std::array<std::size_t, 3> counts{};
    std::vector<double> areas;
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& r : records) {
        if (r.failed()) {
            failures.push_back({{"source_id", r.source_id}, {"error", r.error}});
            continue;
        }
        ++counts[static_cast<std::size_t>(r.category)];
        if (auto a = r.faz_area_mm2()) areas.push_back(*a);
    }
    nlohmann::json j{{"images", records.size()},
                     {"processed", records.size() - failures.size()},
                     {"failed", failures.size()},
                     {"categories", {{"ungradable", counts[0]}, {"gradable", counts[1]}, {"outstanding", counts[2]}}},
                     {"segmented", areas.size()},
                     {"mean_area_mm2", nullptr},
                     {"median_area_mm2", nullptr},
                     {"failures", failures}};
    if (!areas.empty()) {
        double s = 0.0;
        for (double a : areas) s += a;
        std::sort(areas.begin(), areas.end());
        const std::size_t m = areas.size() / 2;
        j["mean_area_mm2"] = s / static_cast<double>(areas.size());
        j["median_area_mm2"] = areas.size() % 2 ? areas[m] : 0.5 * (areas[m - 1] + areas[m]);
    }
    return j;
}

}  // namespace coips::report
