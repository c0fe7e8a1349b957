#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "coips/imaging/image.hpp"

namespace coips::imaging {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

/// Decodes a PNG, JPEG or BMP stream. Gray sources give C=1, colour sources
/// C=3 (RGB order); values are scaled to [0,1] by the sample bit depth.
inline ImageTensor decode_image(const std::string& bytes, double field_mm, const std::string& source_id = {}) {
    if (!(field_mm > 0.0)) throw ConfigError("field_mm must be positive for " + source_id);
    cv::Mat mat;
    try {
        const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data()));
        if (!bytes.empty()) mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw DecodeError(source_id, e.what());
    }
    if (mat.empty()) throw DecodeError(source_id, "unsupported or corrupt image stream");
    double scale;
    switch (mat.depth()) {
        case CV_8U: scale = 255.0; break;
        case CV_16U: scale = 65535.0; break;
        default: throw DecodeError(source_id, "unsupported sample depth");
    }
    const int ch = mat.channels();
    if (ch != 1 && ch != 3 && ch != 4) throw DecodeError(source_id, "unsupported channel count");
    const std::size_t c = ch == 1 ? 1 : 3;
    cv::Mat f;
    mat.convertTo(f, CV_MAKETYPE(CV_64F, ch), 1.0 / scale);
    ImageTensor img = make_image(c, static_cast<std::size_t>(mat.rows), static_cast<std::size_t>(mat.cols), field_mm,
                                 source_id);
    for (int y = 0; y < f.rows; ++y) {
        const double* row = f.ptr<double>(y);
        for (int x = 0; x < f.cols; ++x) {
            if (c == 1) {
                img.at(0, y, x) = static_cast<float>(row[x]);
            } else {
                // OpenCV stores BGR(A)
                img.at(0, y, x) = static_cast<float>(row[x * ch + 2]);
                img.at(1, y, x) = static_cast<float>(row[x * ch + 1]);
                img.at(2, y, x) = static_cast<float>(row[x * ch + 0]);
            }
        }
    }
    return img;
}

inline ImageTensor load_image(const std::filesystem::path& path, double field_mm, const std::string& source_id) {
    std::string bytes;
    try {
        bytes = read_file(path);
    } catch (const IoError& e) {
        throw DecodeError(source_id, e.what());
    }
    return decode_image(bytes, field_mm, source_id);
}

/// 8-bit PNG of an image in [0,1] (values are clamped, rounded).
inline std::string encode_png(const ImageTensor& img) {
    const int type = img.channels() == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat mat(static_cast<int>(img.height()), static_cast<int>(img.width()), type);
    for (std::size_t y = 0; y < img.height(); ++y) {
        auto* row = mat.ptr<std::uint8_t>(static_cast<int>(y));
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < img.channels(); ++c) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                const std::size_t dst = img.channels() == 1 ? 0 : 2 - c;
                row[x * img.channels() + dst] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    }
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", mat, buf)) throw IoError("PNG encoding failed");
    return {buf.begin(), buf.end()};
}

/// 8-bit gray PNG: foreground 255, background 0.
inline std::string encode_mask_png(const FazMask& mask) {
    cv::Mat mat(static_cast<int>(mask.height), static_cast<int>(mask.width), CV_8UC1);
    for (std::size_t y = 0; y < mask.height; ++y) {
        auto* row = mat.ptr<std::uint8_t>(static_cast<int>(y));
        for (std::size_t x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
    }
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", mat, buf)) throw IoError("PNG encoding failed");
    return {buf.begin(), buf.end()};
}

/// Reads a mask raster; any sample above half range is foreground.
inline FazMask decode_mask_png(const std::string& bytes, const std::string& source_id = {}) {
    const ImageTensor img = to_gray(decode_image(bytes, 1.0, source_id));
    FazMask mask(img.height(), img.width(), source_id);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) mask.pixels[i] = img.pixels[i] > 0.5f ? 1 : 0;
    return mask;
}

}  // namespace coips::imaging
