#pragma once

#include "bafc/nn_ops.hpp"

namespace bafc {

// Reverse-mode companions of the forward primitives. Exact gradients, fixed
// accumulation order, templated on float (training) and double (gradient
// checking).

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const ConvLayer<T>& layer, int in_h, int in_w);

// Fills grad_weights (size = layer.weights.size()) and grad_bias (size =
// out_channels), overwriting previous contents.
template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& grad_out, const ConvLayer<T>& layer,
                            std::vector<T>& grad_weights, std::vector<T>& grad_bias);

// d/dx of the per-channel affine z = a*x + b
template <typename T>
Tensor<T> bn_backward_input(const Tensor<T>& grad_out, const BnAffine<T>& bn);

// Gradients of the affine parameters themselves (for trainable affines).
template <typename T>
void bn_backward_params(const Tensor<T>& x, const Tensor<T>& grad_out, std::vector<T>& grad_scale,
                        std::vector<T>& grad_bias);

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& pre, const Tensor<T>& grad_out, const ActivationFn& fn);

// out(2y+dy, 2x+dx) = in(y, x); gradient sums each 2x2 block.
template <typename T>
Tensor<T> upsample_nn2_backward(const Tensor<T>& grad_out);

} // namespace bafc
