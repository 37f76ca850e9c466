// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (all integers and floats little-endian):
//
//   offset  size  field
//   0       4     magic "ULAB"
//   4       2     format version (u16, currently 1)
//   6       4     vocab_size (u32)
//   10      4     d_model    (u32)
//   14      4     n_layers   (u32)
//   18      4     n_heads    (u32)
//   22      4     d_ff       (u32)
//   26      4     max_len    (u32)
//   30      8     parameter count (u64)
//   38      8*n   parameters as f64, in ParamLayout field order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ulab/error.hpp"
#include "ulab/model.hpp"

namespace ulab {

inline constexpr char kCheckpointMagic[4] = {'U', 'L', 'A', 'B'};
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderSize = 38;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const std::vector<unsigned char>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw CheckpointFormatError("checkpoint truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
    pos += sizeof(T);
    return v;
}

} // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const ModelParams& params) {
    const auto& c = params.config();
    std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    detail::put_le<std::uint16_t>(out, kCheckpointVersion);
    for (std::size_t dim : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_len})
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    detail::put_le<std::uint64_t>(out, params.size());
    out.reserve(out.size() + 8 * params.size());
    for (double v : params.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline ModelParams decode_checkpoint(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < kCheckpointHeaderSize || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw CheckpointFormatError("not a ulab checkpoint");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint16_t>(bytes, pos);
    if (version != kCheckpointVersion)
        throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
    ModelConfig c;
    c.vocab_size = detail::get_le<std::uint32_t>(bytes, pos);
    c.d_model = detail::get_le<std::uint32_t>(bytes, pos);
    c.n_layers = detail::get_le<std::uint32_t>(bytes, pos);
    c.n_heads = detail::get_le<std::uint32_t>(bytes, pos);
    c.d_ff = detail::get_le<std::uint32_t>(bytes, pos);
    c.max_len = detail::get_le<std::uint32_t>(bytes, pos);
    const auto count = detail::get_le<std::uint64_t>(bytes, pos);
    ModelParams p;
    try {
        p = ModelParams(c);
    } catch (const ShapeError& e) {
        throw CheckpointFormatError(std::string("bad checkpoint dimensions: ") + e.what());
    }
    if (count != p.size()) throw CheckpointFormatError("parameter count does not match declared shape");
    if (bytes.size() != kCheckpointHeaderSize + 8 * count) throw CheckpointFormatError("checkpoint truncated or padded");
    auto data = p.data();
    for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, pos));
    return p;
}

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write to '" + path + "' failed");
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointFormatError("cannot open checkpoint '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace ulab
