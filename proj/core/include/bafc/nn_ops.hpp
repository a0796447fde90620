#pragma once

#include <array>
#include <vector>

#include "bafc/tensor.hpp"

namespace bafc {

// 2-D convolution layer. Padding is fixed at (kernel_size - 1) / 2 (same
// padding); stride is 1 or 2. Bias is optional (empty vector = none).
template <typename T>
struct ConvLayer {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 3; // odd
    int stride = 1;
    std::vector<T> weights; // [out][in][ky][kx]
    std::vector<T> bias;    // empty or out_channels

    T& w(int p, int q, int ky, int kx) {
        return weights[((static_cast<std::size_t>(p) * in_channels + q) * kernel_size + ky) * kernel_size + kx];
    }
    const T& w(int p, int q, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(p) * in_channels + q) * kernel_size + ky) * kernel_size + kx];
    }

    void validate() const {
        if (out_channels <= 0 || in_channels <= 0) throw ShapeError("conv: channel counts must be positive");
        if (kernel_size <= 0 || kernel_size % 2 == 0) throw ShapeError("conv: kernel size must be odd");
        if (stride != 1 && stride != 2) throw ShapeError("conv: stride must be 1 or 2");
        std::size_t expect = static_cast<std::size_t>(out_channels) * in_channels * kernel_size * kernel_size;
        if (weights.size() != expect) throw ShapeError("conv: weight count does not match dims");
        if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_channels))
            throw ShapeError("conv: bias count does not match out channels");
    }

    template <typename U>
    ConvLayer<U> cast() const {
        ConvLayer<U> o;
        o.out_channels = out_channels;
        o.in_channels = in_channels;
        o.kernel_size = kernel_size;
        o.stride = stride;
        o.weights.assign(weights.begin(), weights.end());
        o.bias.assign(bias.begin(), bias.end());
        return o;
    }
};

// Per-channel affine (scale, bias). The batch-norm statistics of the host
// network are assumed pre-folded into these two vectors; invertible as long
// as every scale is nonzero.
template <typename T>
struct BnAffine {
    std::vector<T> scale;
    std::vector<T> bias;

    int channels() const { return static_cast<int>(scale.size()); }

    void validate() const {
        if (scale.size() != bias.size()) throw ShapeError("bn: scale/bias size mismatch");
    }

    template <typename U>
    BnAffine<U> cast() const {
        BnAffine<U> o;
        o.scale.assign(scale.begin(), scale.end());
        o.bias.assign(bias.begin(), bias.end());
        return o;
    }
};

enum class Activation { identity, leaky_relu };

struct ActivationFn {
    Activation kind = Activation::leaky_relu;
    float slope = 0.1f;

    template <typename T>
    T operator()(T v) const {
        if (kind == Activation::identity) return v;
        return v >= T(0) ? v : static_cast<T>(slope) * v;
    }

    template <typename T>
    T grad(T v) const {
        if (kind == Activation::identity) return T(1);
        return v >= T(0) ? T(1) : static_cast<T>(slope);
    }
};

// Direct summed cross-correlation with zero same-padding. Output spatial dims
// are ceil(H/stride) x ceil(W/stride).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvLayer<T>& layer);

template <typename T>
Tensor<T> bn_forward(const Tensor<T>& x, const BnAffine<T>& bn);

template <typename T>
Tensor<T> bn_inverse(const Tensor<T>& z, const BnAffine<T>& bn);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, const ActivationFn& fn);

// Stride-2 phase decomposition: phase s takes rows congruent to floor(s/2)
// and columns congruent to s (mod 2). Requires even H and W.
template <typename T>
std::array<Tensor<T>, 4> downsample_phases(const Tensor<T>& x);

// Exact inverse of downsample_phases.
template <typename T>
Tensor<T> interleave_phases(const std::array<Tensor<T>, 4>& phases);

} // namespace bafc
