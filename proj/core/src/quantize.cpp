#include "bafc/quantize.hpp"

#include <cmath>

#include "bafc/errors.hpp"

namespace bafc {

void QuantizedPack::validate() const {
    if (n_bits < 2 || n_bits > 8) throw ConfigError("pack: n_bits must be in [2, 8]");
    if (channel_h <= 0 || channel_w <= 0) throw ShapeError("pack: channel dims must be positive");
    if (codes.size() != static_cast<std::size_t>(C()) * plane_size()) throw ShapeError("pack: code count mismatch");
    if (side_info.size() != order.size()) throw ShapeError("pack: side info count mismatch");
    const unsigned limit = 1u << n_bits;
    for (std::uint8_t c : codes)
        if (c >= limit) throw DataError("pack: code out of range for n_bits");
    for (auto [m, M] : side_info) {
        if (!half_is_finite(m) || !half_is_finite(M)) throw DataError("pack: non-finite side info");
        if (half_to_float(m) > half_to_float(M)) throw DataError("pack: side info range out of order");
    }
}

int tile_grid_cols(int C) {
    if (!(C > 0 && (C & (C - 1)) == 0)) throw ConfigError("tile: C must be a power of two");
    int k = 0;
    while ((1 << k) < C) ++k;
    return 1 << ((k + 1) / 2);
}

int tile_grid_rows(int C) {
    if (!(C > 0 && (C & (C - 1)) == 0)) throw ConfigError("tile: C must be a power of two");
    int k = 0;
    while ((1 << k) < C) ++k;
    return 1 << (k / 2);
}

template <typename T>
void quantize_channel(const T* z, int h, int w, int n_bits, std::uint8_t* codes_out, half_bits& m_out,
                      half_bits& M_out) {
    if (n_bits < 2 || n_bits > 8) throw ConfigError("quantize_channel: n_bits must be in [2, 8]");
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (n == 0) throw ShapeError("quantize_channel: empty channel");
    T mn = z[0], mx = z[0];
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(z[i]))) throw DataError("quantize_channel: non-finite sample");
        if (z[i] < mn) mn = z[i];
        if (z[i] > mx) mx = z[i];
    }
    auto [m16, M16] = round_f16_directed(static_cast<float>(mn), static_cast<float>(mx));
    m_out = m16;
    M_out = M16;
    const double lo = half_to_float(m16);
    const double hi = half_to_float(M16);
    const int levels = (1 << n_bits) - 1;
    if (lo == hi) {
        for (std::size_t i = 0; i < n; ++i) codes_out[i] = 0;
        return;
    }
    const double scale = static_cast<double>(levels) / (hi - lo);
    for (std::size_t i = 0; i < n; ++i) {
        // round half away from zero; the argument is always >= 0 here
        double t = (static_cast<double>(z[i]) - lo) * scale;
        long code = std::lround(t);
        if (code < 0) code = 0;
        if (code > levels) code = levels;
        codes_out[i] = static_cast<std::uint8_t>(code);
    }
}

template <typename T>
void dequantize_channel(const std::uint8_t* codes, int h, int w, half_bits m, half_bits M, int n_bits, T* z_out) {
    if (n_bits < 2 || n_bits > 8) throw ConfigError("dequantize_channel: n_bits must be in [2, 8]");
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const unsigned limit = 1u << n_bits;
    const double lo = half_to_float(m);
    const double hi = half_to_float(M);
    const double range = hi - lo; // exact: binary16 differences fit in a double
    const double levels = static_cast<double>((1 << n_bits) - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (codes[i] >= limit) throw DataError("dequantize_channel: code out of range");
        // code*range is exact, so codes 0 and 2^n-1 land exactly on m and M
        z_out[i] = (lo == hi) ? static_cast<T>(lo)
                              : static_cast<T>(static_cast<double>(codes[i]) * range / levels + lo);
    }
}

template <typename T>
QuantizedPack quantize_selected(const Tensor<T>& z, const std::vector<int>& order, int n_bits) {
    QuantizedPack pack;
    pack.n_bits = n_bits;
    pack.channel_h = z.height();
    pack.channel_w = z.width();
    pack.order = order;
    pack.codes.resize(order.size() * z.plane_size());
    pack.side_info.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int ch = order[i];
        if (ch < 0 || ch >= z.channels()) throw ShapeError("quantize_selected: channel index out of range");
        quantize_channel(z.channel_ptr(ch), z.height(), z.width(), n_bits, pack.channel_codes(static_cast<int>(i)),
                         pack.side_info[i].first, pack.side_info[i].second);
    }
    return pack;
}

template <typename T>
Tensor<T> dequantize_pack(const QuantizedPack& pack) {
    Tensor<T> out(pack.C(), pack.channel_h, pack.channel_w);
    for (int i = 0; i < pack.C(); ++i)
        dequantize_channel(pack.channel_codes(i), pack.channel_h, pack.channel_w, pack.side_info[i].first,
                           pack.side_info[i].second, pack.n_bits, out.channel_ptr(i));
    return out;
}

TiledImage tile(const QuantizedPack& pack) {
    pack.validate();
    const int C = pack.C();
    TiledImage img;
    img.grid_cols = tile_grid_cols(C);
    img.grid_rows = tile_grid_rows(C);
    img.channel_h = pack.channel_h;
    img.channel_w = pack.channel_w;
    img.n_bits = pack.n_bits;
    img.pixels.assign(static_cast<std::size_t>(img.height()) * img.width(), 0);
    for (int i = 0; i < C; ++i) {
        const int gr = i / img.grid_cols;
        const int gc = i % img.grid_cols;
        const std::uint8_t* src = pack.channel_codes(i);
        for (int y = 0; y < pack.channel_h; ++y) {
            std::uint8_t* dst = img.pixels.data() +
                                static_cast<std::size_t>(gr * pack.channel_h + y) * img.width() +
                                static_cast<std::size_t>(gc) * pack.channel_w;
            const std::uint8_t* row = src + static_cast<std::size_t>(y) * pack.channel_w;
            for (int x = 0; x < pack.channel_w; ++x) dst[x] = row[x];
        }
    }
    return img;
}

std::vector<std::uint8_t> untile(const TiledImage& img, int channel_h, int channel_w, int C) {
    const int cols = tile_grid_cols(C);
    const int rows = tile_grid_rows(C);
    if (img.height() != rows * channel_h || img.width() != cols * channel_w ||
        img.channel_h != channel_h || img.channel_w != channel_w)
        throw DataError("untile: image dims inconsistent with grid");
    std::vector<std::uint8_t> codes(static_cast<std::size_t>(C) * channel_h * channel_w);
    for (int i = 0; i < C; ++i) {
        const int gr = i / cols;
        const int gc = i % cols;
        std::uint8_t* dst = codes.data() + static_cast<std::size_t>(i) * channel_h * channel_w;
        for (int y = 0; y < channel_h; ++y) {
            const std::uint8_t* src = img.pixels.data() +
                                      static_cast<std::size_t>(gr * channel_h + y) * img.width() +
                                      static_cast<std::size_t>(gc) * channel_w;
            for (int x = 0; x < channel_w; ++x) dst[static_cast<std::size_t>(y) * channel_w + x] = src[x];
        }
    }
    return codes;
}

long long side_info_bits(const QuantizedPack& pack) { return 32ll * pack.C(); }

template void quantize_channel<float>(const float*, int, int, int, std::uint8_t*, half_bits&, half_bits&);
template void quantize_channel<double>(const double*, int, int, int, std::uint8_t*, half_bits&, half_bits&);
template void dequantize_channel<float>(const std::uint8_t*, int, int, half_bits, half_bits, int, float*);
template void dequantize_channel<double>(const std::uint8_t*, int, int, half_bits, half_bits, int, double*);
template QuantizedPack quantize_selected<float>(const Tensor<float>&, const std::vector<int>&, int);
template QuantizedPack quantize_selected<double>(const Tensor<double>&, const std::vector<int>&, int);
template Tensor<float> dequantize_pack<float>(const QuantizedPack&);
template Tensor<double> dequantize_pack<double>(const QuantizedPack&);

} // namespace bafc
