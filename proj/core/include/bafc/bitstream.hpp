#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bafc/quantize.hpp"

namespace bafc {

enum class CodecId : std::uint8_t {
    raw = 0,       // n-bit packed codes, raster order of the tiled image
    med_range = 1, // MED-predicted residuals + adaptive binary range coder
    external = 2,  // payload travels out of band as a graymap + sidecar
};

const char* codec_name(CodecId id);
CodecId codec_from_name(const std::string& name);

// Serialized "BAFC" stream.
//
//   offset size  field
//   0      4     magic "BAFC"
//   4      1     version (1)
//   5      1     codec_id
//   6      1     n_bits
//   7      1     reserved (0)
//   8      4     C                u32 LE
//   12     4     channel_h        u32 LE
//   16     4     channel_w        u32 LE
//   20     4     payload length   u32 LE (bytes)
//   24     4     checksum         u32 LE (FNV-1a over the whole stream with
//                                 this field zeroed)
//   28     2C    order            u16 LE each
//   28+2C  4C    side info        C pairs of binary16 bit patterns, LE
//   28+6C  ...   payload
//
// Side info contributes exactly 32 bits per channel. payload_bits counts the
// exact n-bit code cost for raw payloads (excluding the final byte's padding)
// and whole bytes for range-coded payloads.
struct Bitstream {
    std::vector<std::uint8_t> bytes;
    long long header_bits = 0;
    long long side_info_bits = 0;
    long long payload_bits = 0;

    long long total_bits() const { return header_bits + side_info_bits + payload_bits; }
};

// JPEG-LS median edge detector. Out-of-image neighbors read as 0.
int med_predict(int left, int up, int up_left);

Bitstream encode(const QuantizedPack& pack, CodecId codec);

QuantizedPack decode(const std::vector<std::uint8_t>& bytes);
QuantizedPack decode(const std::uint8_t* bytes, std::size_t size);

// Parsed header of a stream (no payload decode); used to route external-codec
// streams.
struct StreamInfo {
    CodecId codec;
    int n_bits;
    int C;
    int channel_h;
    int channel_w;
    std::vector<int> order;
    std::vector<std::pair<half_bits, half_bits>> side_info;
};
StreamInfo inspect(const std::uint8_t* bytes, std::size_t size);

// External-codec hook: the tiled image as a binary graymap (P5, maxval
// 2^n - 1) plus a text sidecar carrying everything the graymap cannot.
struct PgmExport {
    std::vector<std::uint8_t> pgm;
    std::string sidecar;
};
PgmExport export_tile_pgm(const QuantizedPack& pack);
QuantizedPack import_tile_pgm(const std::vector<std::uint8_t>& pgm, const std::string& sidecar);

} // namespace bafc
