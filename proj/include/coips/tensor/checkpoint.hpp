#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "coips/nn/parameters.hpp"

namespace coips::tensor {

/// Serialized network: the NetSpec JSON plus float32 parameter records.
///
/// Layout (all integers unsigned 32-bit little-endian):
///   "COIP" | version | json length | json bytes | record count |
///   { name length | name bytes | rank | dims... | float32 LE values }*
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string netspec_json;
    std::vector<nn::NamedTensor<float>> tensors;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out = "COIP";
    detail::put_u32(out, Checkpoint::kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.netspec_json.size()));
    out += ckpt.netspec_json;
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& rec : ckpt.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
        out += rec.name;
        detail::put_u32(out, static_cast<std::uint32_t>(rec.value.rank()));
        for (auto d : rec.value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : rec.value.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "COIP") != 0) throw FormatError("not a checkpoint (bad magic)");
    detail::Reader r(bytes);
    r.str(4);
    const auto version = r.u32();
    if (version != Checkpoint::kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.netspec_json = r.str(r.u32());
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        nn::NamedTensor<float> rec;
        rec.name = r.str(r.u32());
        const auto rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = r.u32();
        std::vector<float> values(numel_of(shape));
        for (auto& v : values) v = std::bit_cast<float>(r.u32());
        rec.value = Tensor<float>(std::move(shape), std::move(values));
        ckpt.tensors.push_back(std::move(rec));
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint records");
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const auto bytes = encode_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Snapshot of any network exposing spec JSON and a parameter set.
template <class T>
Checkpoint make_checkpoint(const std::string& netspec_json, const nn::ParameterSet<T>& params) {
    Checkpoint ckpt;
    ckpt.netspec_json = netspec_json;
    for (const auto& nt : params.named_tensors()) ckpt.tensors.push_back({nt.name, nt.value.template cast<float>()});
    return ckpt;
}

}  // namespace coips::tensor
