#include "bafc/nn_ops.hpp"

namespace bafc {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvLayer<T>& layer) {
    layer.validate();
    if (x.channels() != layer.in_channels)
        throw ShapeError("conv2d: input has " + std::to_string(x.channels()) + " channels, layer expects " +
                         std::to_string(layer.in_channels));
    const int h = x.height(), w = x.width();
    const int s = layer.stride;
    const int oh = (h + s - 1) / s, ow = (w + s - 1) / s;
    const int k = layer.kernel_size;
    const int pad = (k - 1) / 2;
    Tensor<T> out(layer.out_channels, oh, ow);
    for (int p = 0; p < layer.out_channels; ++p) {
        T* op = out.channel_ptr(p);
        if (!layer.bias.empty()) {
            const T b = layer.bias[p];
            for (int i = 0; i < oh * ow; ++i) op[i] = b;
        }
        for (int q = 0; q < layer.in_channels; ++q) {
            const T* xq = x.channel_ptr(q);
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = layer.w(p, q, ky, kx);
                    if (wv == T(0)) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* xrow = xq + static_cast<std::size_t>(iy) * w;
                        T* orow = op + static_cast<std::size_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * s + kx - pad;
                            if (ix < 0 || ix >= w) continue;
                            orow[ox] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> bn_forward(const Tensor<T>& x, const BnAffine<T>& bn) {
    bn.validate();
    if (x.channels() != bn.channels()) throw ShapeError("bn_forward: channel count mismatch");
    Tensor<T> out(x.channels(), x.height(), x.width());
    const std::size_t plane = x.plane_size();
    for (int c = 0; c < x.channels(); ++c) {
        const T a = bn.scale[c], b = bn.bias[c];
        const T* src = x.channel_ptr(c);
        T* dst = out.channel_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = a * src[i] + b;
    }
    return out;
}

template <typename T>
Tensor<T> bn_inverse(const Tensor<T>& z, const BnAffine<T>& bn) {
    bn.validate();
    if (z.channels() != bn.channels()) throw ShapeError("bn_inverse: channel count mismatch");
    for (int c = 0; c < bn.channels(); ++c)
        if (bn.scale[c] == T(0)) throw DataError("bn_inverse: zero scale in channel " + std::to_string(c));
    Tensor<T> out(z.channels(), z.height(), z.width());
    const std::size_t plane = z.plane_size();
    for (int c = 0; c < z.channels(); ++c) {
        const T a = bn.scale[c], b = bn.bias[c];
        const T* src = z.channel_ptr(c);
        T* dst = out.channel_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - b) / a;
    }
    return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, const ActivationFn& fn) {
    Tensor<T> out(x.channels(), x.height(), x.width());
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = fn(x.data()[i]);
    return out;
}

template <typename T>
std::array<Tensor<T>, 4> downsample_phases(const Tensor<T>& x) {
    if (x.height() % 2 != 0 || x.width() % 2 != 0)
        throw ShapeError("downsample_phases: H and W must be even");
    const int hh = x.height() / 2, hw = x.width() / 2;
    std::array<Tensor<T>, 4> phases{Tensor<T>(x.channels(), hh, hw), Tensor<T>(x.channels(), hh, hw),
                                    Tensor<T>(x.channels(), hh, hw), Tensor<T>(x.channels(), hh, hw)};
    for (int s = 0; s < 4; ++s) {
        const int ry = s / 2, rx = s % 2;
        Tensor<T>& ph = phases[s];
        for (int c = 0; c < x.channels(); ++c)
            for (int y = 0; y < hh; ++y)
                for (int xx = 0; xx < hw; ++xx) ph.at(c, y, xx) = x.at(c, 2 * y + ry, 2 * xx + rx);
    }
    return phases;
}

template <typename T>
Tensor<T> interleave_phases(const std::array<Tensor<T>, 4>& phases) {
    const Tensor<T>& p0 = phases[0];
    for (int s = 1; s < 4; ++s)
        if (!phases[s].same_shape(p0)) throw ShapeError("interleave_phases: phase shape mismatch");
    Tensor<T> out(p0.channels(), p0.height() * 2, p0.width() * 2);
    for (int s = 0; s < 4; ++s) {
        const int ry = s / 2, rx = s % 2;
        const Tensor<T>& ph = phases[s];
        for (int c = 0; c < p0.channels(); ++c)
            for (int y = 0; y < p0.height(); ++y)
                for (int xx = 0; xx < p0.width(); ++xx) out.at(c, 2 * y + ry, 2 * xx + rx) = ph.at(c, y, xx);
    }
    return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const ConvLayer<float>&);
template Tensor<double> conv2d(const Tensor<double>&, const ConvLayer<double>&);
template Tensor<float> bn_forward(const Tensor<float>&, const BnAffine<float>&);
template Tensor<double> bn_forward(const Tensor<double>&, const BnAffine<double>&);
template Tensor<float> bn_inverse(const Tensor<float>&, const BnAffine<float>&);
template Tensor<double> bn_inverse(const Tensor<double>&, const BnAffine<double>&);
template Tensor<float> activation(const Tensor<float>&, const ActivationFn&);
template Tensor<double> activation(const Tensor<double>&, const ActivationFn&);
template std::array<Tensor<float>, 4> downsample_phases(const Tensor<float>&);
template std::array<Tensor<double>, 4> downsample_phases(const Tensor<double>&);
template Tensor<float> interleave_phases(const std::array<Tensor<float>, 4>&);
template Tensor<double> interleave_phases(const std::array<Tensor<double>, 4>&);

} // namespace bafc
