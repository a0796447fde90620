// Microbenchmarks for the hot paths: quantization, the two codecs, and the
// restoration network forward pass.

#include <benchmark/benchmark.h>

#include <vector>

#include "bafc/baf_net.hpp"
#include "bafc/bitstream.hpp"
#include "bafc/quantize.hpp"
#include "bafc/util.hpp"

namespace {

using namespace bafc;

// Feature tensor with smooth content, the shape a 32x32 input produces at the
// split point (P=32 channels, 16x16 planes).
Tensor<float> make_features() {
    DetRng rng(1);
    Tensor<float> z(32, 16, 16);
    for (int c = 0; c < 32; ++c) {
        const float fy = rng.uniform_f(0.3f, 1.2f), fx = rng.uniform_f(0.3f, 1.2f);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                z.at(c, y, x) = std::sin(fy * static_cast<float>(y)) * std::cos(fx * static_cast<float>(x)) +
                                rng.uniform_f(-0.05f, 0.05f);
    }
    return z;
}

std::vector<int> iota_order(int C) {
    std::vector<int> order(static_cast<std::size_t>(C));
    for (int i = 0; i < C; ++i) order[static_cast<std::size_t>(i)] = i;
    return order;
}

QuantizedPack make_pack(int C, int n_bits) {
    return quantize_selected(make_features(), iota_order(C), n_bits);
}

void BM_quantize_selected(benchmark::State& state) {
    const Tensor<float> z = make_features();
    const std::vector<int> order = iota_order(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(quantize_selected(z, order, 8));
}
BENCHMARK(BM_quantize_selected)->Arg(8)->Arg(32);

void BM_encode(benchmark::State& state) {
    const QuantizedPack pack = make_pack(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    const CodecId codec = state.range(2) ? CodecId::med_range : CodecId::raw;
    long long bits = 0;
    for (auto _ : state) {
        Bitstream bs = encode(pack, codec);
        bits = bs.total_bits();
        benchmark::DoNotOptimize(bs.bytes.data());
    }
    state.counters["total_bits"] = static_cast<double>(bits);
    state.SetLabel(codec_name(codec));
}
BENCHMARK(BM_encode)->Args({32, 8, 0})->Args({32, 8, 1})->Args({8, 4, 0})->Args({8, 4, 1});

void BM_decode(benchmark::State& state) {
    const Bitstream bs =
        encode(make_pack(static_cast<int>(state.range(0)), static_cast<int>(state.range(1))),
               state.range(2) ? CodecId::med_range : CodecId::raw);
    for (auto _ : state) benchmark::DoNotOptimize(decode(bs.bytes));
    state.SetLabel(state.range(2) ? "med_range" : "raw");
}
BENCHMARK(BM_decode)->Args({32, 8, 0})->Args({32, 8, 1})->Args({8, 4, 0})->Args({8, 4, 1});

void BM_conv2d(benchmark::State& state) {
    DetRng rng(2);
    ConvLayer<float> conv;
    conv.in_channels = 16;
    conv.out_channels = 16;
    conv.kernel_size = 3;
    conv.stride = 1;
    conv.weights.resize(16 * 16 * 9);
    for (auto& w : conv.weights) w = rng.uniform_f(-0.3f, 0.3f);
    conv.bias.assign(16, 0.01f);
    Tensor<float> x(16, 32, 32);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform_f(-1.0f, 1.0f);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, conv));
}
BENCHMARK(BM_conv2d);

void BM_baf_forward(benchmark::State& state) {
    const int C = static_cast<int>(state.range(0));
    DetRng rng(3);
    ConvLayer<float> frozen;
    frozen.in_channels = 16;
    frozen.out_channels = 32;
    frozen.kernel_size = 3;
    frozen.stride = 2;
    frozen.weights.resize(32 * 16 * 9);
    for (auto& w : frozen.weights) w = rng.uniform_f(-0.3f, 0.3f);
    frozen.bias.assign(32, 0.0f);
    BnAffine<float> bn;
    bn.scale.assign(32, 1.0f);
    bn.bias.assign(32, 0.0f);
    const BafModel<float> model = init_baf_model(16, iota_order(C), frozen, bn, 8, 4);
    Tensor<float> zc(C, 16, 16);
    for (std::size_t i = 0; i < zc.size(); ++i) zc.data()[i] = rng.uniform_f(-1.0f, 1.0f);
    for (auto _ : state) benchmark::DoNotOptimize(baf_forward(zc, model));
}
BENCHMARK(BM_baf_forward)->Arg(8)->Arg(32);

} // namespace

BENCHMARK_MAIN();
