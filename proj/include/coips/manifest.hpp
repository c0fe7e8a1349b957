#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coips/imaging/codec.hpp"
#include "coips/quality.hpp"
#include "coips/util/csv.hpp"

namespace coips {

/// One corpus entry. Paths are stored as written and resolved against the
/// manifest's directory.
struct ManifestRow {
    std::string source_id;
    std::optional<Quality> label;
    std::string image_path;
    std::string mask_path;
    double field_mm = 3.0;
    std::string split;
    std::string modality;    // "socta", "docta" or empty
    std::string sibling_id;  // sOCTA partner of a dOCTA image
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRow> rows;

    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    std::vector<const ManifestRow*> in_split(const std::string& split) const {
        std::vector<const ManifestRow*> out;
        for (const auto& r : rows)
            if (split.empty() || r.split == split) out.push_back(&r);
        return out;
    }
};

inline const char* kManifestHeader = "source_id,class,image_path,mask_path,field_mm,split";

inline std::string write_manifest_csv(const Manifest& m) {
    std::string out = std::string(kManifestHeader) + "\n";
    for (const auto& r : m.rows) {
        out += csv::check_field(r.source_id) + "," + (r.label ? to_string(*r.label) : "") + "," +
               csv::check_field(r.image_path) + "," + csv::check_field(r.mask_path) + "," + csv::fmt_exact(r.field_mm) +
               "," + csv::check_field(r.split) + "\n";
    }
    return out;
}

/// Requires source_id and image_path; every other column is optional.
inline Manifest parse_manifest_csv(const std::string& text, const std::filesystem::path& base_dir,
                                   double default_field_mm = 3.0) {
    const auto table = csv::parse(text);
    Manifest m;
    m.base_dir = base_dir;
    const auto id_col = table.column("source_id");
    const auto img_col = table.column("image_path");
    auto opt = [&](const char* name) -> std::optional<std::size_t> {
        if (table.has_column(name)) return table.column(name);
        return std::nullopt;
    };
    const auto cls = opt("class"), mask = opt("mask_path"), fmm = opt("field_mm"), split = opt("split"),
               modality = opt("modality"), sibling = opt("sibling_id");
    for (const auto& row : table.rows) {
        ManifestRow r;
        r.source_id = row[id_col];
        r.image_path = row[img_col];
        if (cls && !row[*cls].empty()) r.label = parse_quality(row[*cls]);
        if (mask) r.mask_path = row[*mask];
        r.field_mm = (fmm && !row[*fmm].empty()) ? csv::parse_double(row[*fmm]) : default_field_mm;
        if (!(r.field_mm > 0.0)) throw ConfigError("manifest row " + r.source_id + ": field_mm must be positive");
        if (split) r.split = row[*split];
        if (modality) r.modality = row[*modality];
        if (sibling) r.sibling_id = row[*sibling];
        m.rows.push_back(std::move(r));
    }
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, double default_field_mm = 3.0) {
    return parse_manifest_csv(imaging::read_file(path), path.parent_path(), default_field_mm);
}

}  // namespace coips
