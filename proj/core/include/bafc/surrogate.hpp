#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bafc/correlation.hpp"
#include "bafc/nn_ops.hpp"

namespace bafc {

struct LabeledImage {
    Tensor<float> image;
    int label = 0;
};

struct Dataset {
    std::vector<LabeledImage> items;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    int num_classes = 0;
};

// Deterministic synthetic classification set: K oriented-texture classes at
// 32x32, one channel, class-conditional mean intensities separated by well
// over 10/255. Labels are assigned round-robin; the train/val split is fixed
// by the seed.
Dataset gen_synthetic_dataset(std::uint64_t seed, int count, int K);

// Small split classifier standing in for a production host network: front
// stages up to the split layer (stride-2 conv + affine), then one cloud-side
// conv stage, global average pooling, and a linear head.
struct SurrogateNet {
    SplitFront front;
    ActivationFn act;            // sigma at the split and inside stages
    ConvLayer<float> back_conv;  // P -> back width
    BnAffine<float> back_bn;
    std::vector<float> fc_w;     // K x back width, row-major
    std::vector<float> fc_b;     // K

    int num_classes() const { return static_cast<int>(fc_b.size()); }
    int P() const { return front.split_conv.out_channels; }
    int Q() const { return front.split_conv.in_channels; }

    void validate() const;

    // Cloud half starting from the (possibly reconstructed) split output Z.
    std::vector<float> logits_from_z(const Tensor<float>& z) const;
    int predict_from_z(const Tensor<float>& z) const;
    int predict(const Tensor<float>& image) const;
};

struct SurrogateTrainConfig {
    int Q = 16;          // split input channels
    int P = 32;          // split output channels
    int back_width = 16; // cloud-side conv width
    double lr = 2e-3;
    int batch = 16;
    int iterations = 300;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double target_accuracy = 0.90;

    void validate() const;
};

// Softmax-classification training of the whole stack, deterministic by seed.
// Fails with TrainingError if validation accuracy ends below the target (the
// synthetic task is constructed to be easy, so that means a misconfigured
// harness).
SurrogateNet train_surrogate(const Dataset& data, std::uint64_t seed, const SurrogateTrainConfig& cfg = {});

double evaluate_accuracy(const SurrogateNet& net, const Dataset& data, const std::vector<std::size_t>& subset,
                         int threads = 1);

// "SNET" network file: magic, version, activation slope, class count, layer
// dims, then all parameters as little-endian 32-bit floats.
std::vector<std::uint8_t> surrogate_bytes(const SurrogateNet& net);
SurrogateNet parse_surrogate(const std::uint8_t* data, std::size_t size);
void write_surrogate(const std::string& path, const SurrogateNet& net);
SurrogateNet read_surrogate(const std::string& path);

} // namespace bafc
