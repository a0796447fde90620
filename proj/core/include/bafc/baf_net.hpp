#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bafc/grad_ops.hpp"
#include "bafc/nn_ops.hpp"
#include "bafc/quantize.hpp"

namespace bafc {

// v if v >= 0, alpha_c * v otherwise; one learned alpha per channel.
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const std::vector<T>& alpha);

template <typename T>
Tensor<T> prelu_backward_input(const Tensor<T>& pre, const Tensor<T>& grad_out, const std::vector<T>& alpha);

// Fills grad_alpha with d(loss)/d(alpha_c) = sum over negative pre-activations
// of v*g, overwriting any previous contents.
template <typename T>
void prelu_backward_alpha(const Tensor<T>& pre, const Tensor<T>& grad_out, std::vector<T>& grad_alpha);

// Nearest-neighbor 2x upsampling: out(2y+dy, 2x+dx) = in(y, x).
template <typename T>
Tensor<T> upsample_nn2(const Tensor<T>& x);

// Back-and-Forth predictor. Backward path: inverse BN on the C received
// channels, then upsample + four 3x3 convs (PReLU after the first three)
// reconstructing the split layer's input. Forward path: the host's frozen
// layer-l conv (stride 2) + BN, re-predicting all P channels.
template <typename T>
struct BafModel {
    int hidden = 0;
    int n_bits = 8;              // quantizer depth this model was trained against
    std::vector<int> order;      // transmitted-channel selection, C entries
    ConvLayer<T> conv1;          // C -> hidden, applied after x2 upsampling
    ConvLayer<T> conv2;          // hidden -> hidden
    ConvLayer<T> conv3;          // hidden -> hidden
    ConvLayer<T> conv4;          // hidden -> Q, identity activation
    std::vector<T> alpha1, alpha2, alpha3;
    ConvLayer<T> frozen_conv;    // host layer l: Q -> P, stride 2
    BnAffine<T> frozen_bn;       // host layer l affine, P channels

    int C() const { return static_cast<int>(order.size()); }
    int Q() const { return frozen_conv.in_channels; }
    int P() const { return frozen_conv.out_channels; }

    void validate() const;

    template <typename U>
    BafModel<U> cast() const {
        BafModel<U> o;
        o.hidden = hidden;
        o.n_bits = n_bits;
        o.order = order;
        o.conv1 = conv1.template cast<U>();
        o.conv2 = conv2.template cast<U>();
        o.conv3 = conv3.template cast<U>();
        o.conv4 = conv4.template cast<U>();
        o.alpha1.assign(alpha1.begin(), alpha1.end());
        o.alpha2.assign(alpha2.begin(), alpha2.end());
        o.alpha3.assign(alpha3.begin(), alpha3.end());
        o.frozen_conv = frozen_conv.template cast<U>();
        o.frozen_bn = frozen_bn.template cast<U>();
        return o;
    }
};

// Seeded uniform init in +-sqrt(1/fan_in); PReLU alphas start at 0.25.
BafModel<float> init_baf_model(int hidden, const std::vector<int>& order, const ConvLayer<float>& frozen_conv,
                               const BnAffine<float>& frozen_bn, int n_bits, std::uint64_t seed);

template <typename T>
struct BafForwardResult {
    Tensor<T> x_tilde; // Q x 2h x 2w, reconstructed split-layer input
    Tensor<T> z_tilde; // P x h x w, re-predicted split-layer output
};

template <typename T>
BafForwardResult<T> baf_forward(const Tensor<T>& zc_hat, const BafModel<T>& model);

// Eq.-6 consolidation of one transmitted channel: each prediction is clamped
// into the closed quantizer bin of its received code,
// [m' + (k-0.5)d, m' + (k+0.5)d] with d = (M'-m')/(2^n-1).
template <typename T>
void consolidate_channel(const std::uint8_t* codes, int h, int w, half_bits m, half_bits M, int n_bits, T* z);

// Applies consolidate_channel to every transmitted channel of the full
// prediction, routed by pack.order.
template <typename T>
void consolidate(Tensor<T>& z_tilde, const QuantizedPack& pack);

// Sum over all elements of sqrt((y - sigma(z))^2 + eps^2).
template <typename T>
double charbonnier_loss(const Tensor<T>& y_target, const Tensor<T>& z_tilde, const ActivationFn& sigma, double eps);

template <typename T>
struct BafGrads {
    std::vector<T> conv1_w, conv1_b, alpha1;
    std::vector<T> conv2_w, conv2_b, alpha2;
    std::vector<T> conv3_w, conv3_b, alpha3;
    std::vector<T> conv4_w, conv4_b;

    void resize_for(const BafModel<T>& model);
    void zero();
    void accumulate(const BafGrads<T>& other, T weight);
};

// Full forward + exact reverse-mode sweep; returns the Charbonnier loss and
// fills grads for every trainable parameter. Frozen conv/BN parameters get
// no gradient by construction.
template <typename T>
double baf_backward(const BafModel<T>& model, const Tensor<T>& zc_hat, const Tensor<T>& y_target,
                    const ActivationFn& sigma, double eps, BafGrads<T>& grads);

struct TrainConfig {
    double epsilon = 1e-3; // Charbonnier regularizer
    double lr = 1e-3;
    int batch = 8;
    int iterations = 400;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    // Fraction of pairs held out for best-model selection. When the holdout
    // rounds to zero pairs, selection falls back to full-dataset loss.
    double holdout_fraction = 0.0;
    int eval_interval = 25;

    void validate() const;
};

struct TrainReport {
    std::vector<double> loss_history; // minibatch loss per iteration
    double best_eval_loss = 0.0;
    int best_iteration = 0;
};

// Adam on all trainable parameters; deterministic given seed; training is
// single-threaded. Consolidation plays no part in the loss. Non-finite loss
// raises TrainingError. Returns the snapshot with the lowest selection loss.
template <typename T>
BafModel<T> train_baf(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& dataset, const BafModel<T>& init,
                      const ActivationFn& sigma, const TrainConfig& cfg, TrainReport* report = nullptr);

// "BAFM" model file (little-endian): magic, version, n_bits, kernel size,
// C/Q/P/hidden, frozen-weight hash, selection order, then all parameters as
// 32-bit floats in declaration order (trainable layers first, frozen last).
std::vector<std::uint8_t> baf_model_bytes(const BafModel<float>& model);
BafModel<float> parse_baf_model(const std::uint8_t* data, std::size_t size);
void write_baf_model(const std::string& path, const BafModel<float>& model);
BafModel<float> read_baf_model(const std::string& path);

std::uint32_t frozen_weights_hash(const ConvLayer<float>& conv, const BnAffine<float>& bn);

} // namespace bafc
