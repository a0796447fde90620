#pragma once

#include <span>
#include <string>
#include <vector>

#include "bafc/nn_ops.hpp"

namespace bafc {

// Absolute pairwise correlation statistics between the split layer's output
// channels (rows, P of them) and its input channels (columns, Q of them),
// averaged over the analysis images.
struct CorrelationMatrix {
    int P = 0;
    int Q = 0;
    int sample_count = 0;
    std::vector<double> rho; // P x Q row-major, entries in [0, 1]

    double at(int p, int q) const { return rho[static_cast<std::size_t>(p) * Q + q]; }
    double& at(int p, int q) { return rho[static_cast<std::size_t>(p) * Q + q]; }
};

// Ordered list of transmitted channels, strongest total correlation first.
struct ChannelSelection {
    std::vector<int> order;

    int C() const { return static_cast<int>(order.size()); }
};

// |Pearson correlation| of two equal-length vectors, in [0, 1]. A vector with
// zero variance carries no signal and yields 0.
double abs_corr(std::span<const double> z, std::span<const double> x);
double abs_corr(std::span<const float> z, std::span<const float> x);

// Mean over the four stride-2 phases of |corr(z, phase_s(x))|. x dims must be
// exactly twice z's.
template <typename T>
double rho_pq(const T* z, int zh, int zw, const T* x, int xh, int xw);

// The layers of the host network up to and including the split point: a
// stack of conv+affine+activation stages producing the split layer's input,
// then the split convolution (stride 2) and its affine.
struct SplitFront {
    struct Stage {
        ConvLayer<float> conv;
        BnAffine<float> bn;
        ActivationFn act;
    };
    std::vector<Stage> pre;
    ConvLayer<float> split_conv;
    BnAffine<float> split_bn;

    // X: input to the split layer; Z: the affine output to be transmitted.
    Tensor<float> forward_x(const Tensor<float>& image) const;
    Tensor<float> forward_z_from_x(const Tensor<float>& x) const;
};

// Per-image rho matrices averaged in dataset order (64-bit accumulation), so
// the result is identical for any worker count.
CorrelationMatrix accumulate_stats(const SplitFront& front, const std::vector<Tensor<float>>& images,
                                   int threads = 1);

// Top C channels by total correlation score, descending, ties by ascending
// index. C must be a power of two and <= P.
ChannelSelection select_channels(const CorrelationMatrix& stats, int C);

bool is_power_of_two(int v);

// Human-readable selection file consumed by the encoder CLI.
struct SelectionFile {
    CorrelationMatrix stats;
    ChannelSelection selection;
};

std::string selection_to_text(const CorrelationMatrix& stats, const ChannelSelection& sel);
SelectionFile parse_selection_text(const std::string& text);
void write_selection_file(const std::string& path, const CorrelationMatrix& stats, const ChannelSelection& sel);
SelectionFile read_selection_file(const std::string& path);

} // namespace bafc
