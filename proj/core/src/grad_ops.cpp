#include "bafc/grad_ops.hpp"

namespace bafc {

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const ConvLayer<T>& layer, int in_h, int in_w) {
    layer.validate();
    if (grad_out.channels() != layer.out_channels) throw ShapeError("conv2d_backward_input: channel mismatch");
    const int s = layer.stride;
    const int k = layer.kernel_size;
    const int pad = (k - 1) / 2;
    const int oh = grad_out.height(), ow = grad_out.width();
    if (oh != (in_h + s - 1) / s || ow != (in_w + s - 1) / s)
        throw ShapeError("conv2d_backward_input: output dims inconsistent with input dims");
    Tensor<T> gx(layer.in_channels, in_h, in_w);
    for (int p = 0; p < layer.out_channels; ++p) {
        const T* gp = grad_out.channel_ptr(p);
        for (int q = 0; q < layer.in_channels; ++q) {
            T* gq = gx.channel_ptr(q);
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = layer.w(p, q, ky, kx);
                    if (wv == T(0)) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= in_h) continue;
                        const T* grow = gp + static_cast<std::size_t>(oy) * ow;
                        T* xrow = gq + static_cast<std::size_t>(iy) * in_w;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * s + kx - pad;
                            if (ix < 0 || ix >= in_w) continue;
                            xrow[ix] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& grad_out, const ConvLayer<T>& layer,
                            std::vector<T>& grad_weights, std::vector<T>& grad_bias) {
    layer.validate();
    if (x.channels() != layer.in_channels || grad_out.channels() != layer.out_channels)
        throw ShapeError("conv2d_backward_params: channel mismatch");
    grad_weights.assign(layer.weights.size(), T(0));
    grad_bias.assign(static_cast<std::size_t>(layer.out_channels), T(0));
    const int s = layer.stride;
    const int k = layer.kernel_size;
    const int pad = (k - 1) / 2;
    const int h = x.height(), w = x.width();
    const int oh = grad_out.height(), ow = grad_out.width();
    for (int p = 0; p < layer.out_channels; ++p) {
        const T* gp = grad_out.channel_ptr(p);
        T gb = T(0);
        for (int i = 0; i < oh * ow; ++i) gb += gp[i];
        grad_bias[p] = gb;
        for (int q = 0; q < layer.in_channels; ++q) {
            const T* xq = x.channel_ptr(q);
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    T acc = T(0);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* xrow = xq + static_cast<std::size_t>(iy) * w;
                        const T* grow = gp + static_cast<std::size_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * s + kx - pad;
                            if (ix < 0 || ix >= w) continue;
                            acc += xrow[ix] * grow[ox];
                        }
                    }
                    grad_weights[((static_cast<std::size_t>(p) * layer.in_channels + q) * k + ky) * k + kx] = acc;
                }
            }
        }
    }
}

template <typename T>
Tensor<T> bn_backward_input(const Tensor<T>& grad_out, const BnAffine<T>& bn) {
    if (grad_out.channels() != bn.channels()) throw ShapeError("bn_backward_input: channel mismatch");
    Tensor<T> gx(grad_out.channels(), grad_out.height(), grad_out.width());
    const std::size_t plane = grad_out.plane_size();
    for (int c = 0; c < grad_out.channels(); ++c) {
        const T a = bn.scale[c];
        const T* g = grad_out.channel_ptr(c);
        T* dst = gx.channel_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = a * g[i];
    }
    return gx;
}

template <typename T>
void bn_backward_params(const Tensor<T>& x, const Tensor<T>& grad_out, std::vector<T>& grad_scale,
                        std::vector<T>& grad_bias) {
    if (!x.same_shape(grad_out)) throw ShapeError("bn_backward_params: shape mismatch");
    grad_scale.assign(static_cast<std::size_t>(x.channels()), T(0));
    grad_bias.assign(static_cast<std::size_t>(x.channels()), T(0));
    const std::size_t plane = x.plane_size();
    for (int c = 0; c < x.channels(); ++c) {
        const T* xs = x.channel_ptr(c);
        const T* g = grad_out.channel_ptr(c);
        T ga = T(0), gb = T(0);
        for (std::size_t i = 0; i < plane; ++i) {
            ga += xs[i] * g[i];
            gb += g[i];
        }
        grad_scale[c] = ga;
        grad_bias[c] = gb;
    }
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& pre, const Tensor<T>& grad_out, const ActivationFn& fn) {
    if (!pre.same_shape(grad_out)) throw ShapeError("activation_backward: shape mismatch");
    Tensor<T> gx(pre.channels(), pre.height(), pre.width());
    const std::size_t n = pre.size();
    for (std::size_t i = 0; i < n; ++i) gx.data()[i] = grad_out.data()[i] * fn.grad(pre.data()[i]);
    return gx;
}

template <typename T>
Tensor<T> upsample_nn2_backward(const Tensor<T>& grad_out) {
    if (grad_out.height() % 2 != 0 || grad_out.width() % 2 != 0)
        throw ShapeError("upsample_nn2_backward: dims must be even");
    const int hh = grad_out.height() / 2, hw = grad_out.width() / 2;
    Tensor<T> gx(grad_out.channels(), hh, hw);
    for (int c = 0; c < grad_out.channels(); ++c)
        for (int y = 0; y < hh; ++y)
            for (int x = 0; x < hw; ++x)
                gx.at(c, y, x) = grad_out.at(c, 2 * y, 2 * x) + grad_out.at(c, 2 * y, 2 * x + 1) +
                                 grad_out.at(c, 2 * y + 1, 2 * x) + grad_out.at(c, 2 * y + 1, 2 * x + 1);
    return gx;
}

template Tensor<float> conv2d_backward_input(const Tensor<float>&, const ConvLayer<float>&, int, int);
template Tensor<double> conv2d_backward_input(const Tensor<double>&, const ConvLayer<double>&, int, int);
template void conv2d_backward_params(const Tensor<float>&, const Tensor<float>&, const ConvLayer<float>&,
                                     std::vector<float>&, std::vector<float>&);
template void conv2d_backward_params(const Tensor<double>&, const Tensor<double>&, const ConvLayer<double>&,
                                     std::vector<double>&, std::vector<double>&);
template Tensor<float> bn_backward_input(const Tensor<float>&, const BnAffine<float>&);
template Tensor<double> bn_backward_input(const Tensor<double>&, const BnAffine<double>&);
template void bn_backward_params(const Tensor<float>&, const Tensor<float>&, std::vector<float>&, std::vector<float>&);
template void bn_backward_params(const Tensor<double>&, const Tensor<double>&, std::vector<double>&, std::vector<double>&);
template Tensor<float> activation_backward(const Tensor<float>&, const Tensor<float>&, const ActivationFn&);
template Tensor<double> activation_backward(const Tensor<double>&, const Tensor<double>&, const ActivationFn&);
template Tensor<float> upsample_nn2_backward(const Tensor<float>&);
template Tensor<double> upsample_nn2_backward(const Tensor<double>&);

} // namespace bafc
