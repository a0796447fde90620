#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bafc/half.hpp"
#include "bafc/tensor.hpp"

namespace bafc {

// Per-channel n-bit codes plus the binary16 range pair for each channel.
// `order` records which host channel each code plane came from, in transmit
// order.
struct QuantizedPack {
    int n_bits = 8; // in [2, 8]
    int channel_h = 0;
    int channel_w = 0;
    std::vector<int> order;
    std::vector<std::uint8_t> codes;                        // C x channel_h x channel_w
    std::vector<std::pair<half_bits, half_bits>> side_info; // (m, M) per channel

    int C() const { return static_cast<int>(order.size()); }
    std::size_t plane_size() const { return static_cast<std::size_t>(channel_h) * channel_w; }
    const std::uint8_t* channel_codes(int i) const { return codes.data() + static_cast<std::size_t>(i) * plane_size(); }
    std::uint8_t* channel_codes(int i) { return codes.data() + static_cast<std::size_t>(i) * plane_size(); }

    void validate() const;
};

// The C quantized channels packed into one rectangular image on a
// power-of-two grid.
struct TiledImage {
    int grid_rows = 0;
    int grid_cols = 0;
    int channel_h = 0;
    int channel_w = 0;
    int n_bits = 8;
    std::vector<std::uint8_t> pixels; // (grid_rows*channel_h) x (grid_cols*channel_w)

    int height() const { return grid_rows * channel_h; }
    int width() const { return grid_cols * channel_w; }
};

// Grid shape for C channels (C a power of two): cols = 2^ceil(log2(C)/2),
// rows = 2^floor(log2(C)/2), so cols*rows == C.
int tile_grid_cols(int C);
int tile_grid_rows(int C);

// n-bit uniform scalar quantization of one channel. The range endpoints are
// rounded to binary16 (min down, max up) before use, so every sample lies in
// [m', M'] and codes stay below 2^n. A degenerate range (m' == M') codes to
// all zeros.
template <typename T>
void quantize_channel(const T* z, int h, int w, int n_bits, std::uint8_t* codes_out, half_bits& m_out,
                      half_bits& M_out);

template <typename T>
void dequantize_channel(const std::uint8_t* codes, int h, int w, half_bits m, half_bits M, int n_bits, T* z_out);

// Quantizes the listed channels of a full split-layer tensor into a pack.
template <typename T>
QuantizedPack quantize_selected(const Tensor<T>& z, const std::vector<int>& order, int n_bits);

// Inverse of quantize_selected up to quantization error: C channels in
// transmit order.
template <typename T>
Tensor<T> dequantize_pack(const QuantizedPack& pack);

TiledImage tile(const QuantizedPack& pack);

// Returns the C code planes in transmit order, bit-exactly undoing tile().
std::vector<std::uint8_t> untile(const TiledImage& img, int channel_h, int channel_w, int C);

// Side information cost: 32 bits per transmitted channel.
long long side_info_bits(const QuantizedPack& pack);

} // namespace bafc
