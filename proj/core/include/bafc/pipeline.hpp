#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bafc/baf_net.hpp"
#include "bafc/bitstream.hpp"
#include "bafc/surrogate.hpp"

namespace bafc {

// Mobile side: front layers -> split affine output Z -> selected channels ->
// quantize -> tile -> entropy-code.
Bitstream pipeline_encode(const Tensor<float>& image, const SurrogateNet& net, const std::vector<int>& order,
                          int n_bits, CodecId codec);

struct DecodeResult {
    int prediction = -1;
    Tensor<float> z_tilde; // consolidated full-channel reconstruction of Z
};

// Cloud side: decode -> dequantize -> BaF restore -> consolidate -> sigma ->
// back layers -> class prediction. A stream whose C, n, selection, or frozen
// split weights disagree with the model/net raises ConfigError.
DecodeResult pipeline_decode(const std::vector<std::uint8_t>& stream, const SurrogateNet& net,
                             const BafModel<float>& baf);

// Non-learned baseline restorer: transmitted channels take their dequantized
// values, untransmitted channels take the split affine's bias field.
Tensor<float> zero_fill_restore(const QuantizedPack& pack, const SurrogateNet& net);

// Training pairs for the BaF predictor: zc_hat = dequantized quantized
// selected channels, target = sigma(Z) with the true full-channel Z.
std::vector<std::pair<Tensor<float>, Tensor<float>>> make_baf_dataset(const SurrogateNet& net, const Dataset& data,
                                                                      const std::vector<std::size_t>& subset,
                                                                      const std::vector<int>& order, int n_bits);

struct SweepRow {
    int C = 0;
    int n = 0;
    CodecId codec = CodecId::raw;
    double bits_mean = 0.0;
    double accuracy = 0.0;
    double restore_err = 0.0; // mean |Z~ - Z| per element over the eval set
};

struct SweepConfig {
    std::vector<int> Cs{4, 8, 16, 32};
    std::vector<int> ns{2, 4, 6, 8};
    std::vector<CodecId> codecs{CodecId::raw, CodecId::med_range};
    int threads = 1;
};

using BafModelSet = std::map<std::pair<int, int>, BafModel<float>>; // keyed by (C, n)

// Trains one model per (C, n): selection prefix of length C, quantizer depth
// n. Per-model seeds derive from cfg.seed, so the set is reproducible.
BafModelSet train_sweep_models(const SurrogateNet& net, const Dataset& data, const ChannelSelection& sel,
                               const std::vector<int>& Cs, const std::vector<int>& ns, const TrainConfig& cfg,
                               int hidden);

// Rate-accuracy sweep over the validation split; rows ordered by (C, n,
// codec) in config order; per-image work is reduced in dataset order.
std::vector<SweepRow> sweep(const SurrogateNet& net, const BafModelSet& models, const SweepConfig& cfg,
                            const Dataset& data);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Image ingestion for the CLI: FTEN tensors or 8-bit binary graymaps
// (values scaled to [0, 1]).
Tensor<float> read_image_any(const std::string& path);

} // namespace bafc
