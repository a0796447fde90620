#include "bafc/baf_net.hpp"

#include <cmath>
#include <cstring>

#include "bafc/errors.hpp"
#include "bafc/half.hpp"
#include "bafc/util.hpp"

namespace bafc {

template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const std::vector<T>& alpha) {
    if (alpha.size() != static_cast<std::size_t>(x.channels())) throw ShapeError("prelu: alpha count != channels");
    Tensor<T> out(x.channels(), x.height(), x.width());
    const std::size_t plane = x.plane_size();
    for (int c = 0; c < x.channels(); ++c) {
        const T a = alpha[c];
        const T* src = x.channel_ptr(c);
        T* dst = out.channel_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] >= T(0) ? src[i] : a * src[i];
    }
    return out;
}

template <typename T>
Tensor<T> prelu_backward_input(const Tensor<T>& pre, const Tensor<T>& grad_out, const std::vector<T>& alpha) {
    if (!pre.same_shape(grad_out)) throw ShapeError("prelu_backward_input: shape mismatch");
    if (alpha.size() != static_cast<std::size_t>(pre.channels()))
        throw ShapeError("prelu_backward_input: alpha count != channels");
    Tensor<T> gx(pre.channels(), pre.height(), pre.width());
    const std::size_t plane = pre.plane_size();
    for (int c = 0; c < pre.channels(); ++c) {
        const T a = alpha[c];
        const T* v = pre.channel_ptr(c);
        const T* g = grad_out.channel_ptr(c);
        T* dst = gx.channel_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = v[i] >= T(0) ? g[i] : a * g[i];
    }
    return gx;
}

template <typename T>
void prelu_backward_alpha(const Tensor<T>& pre, const Tensor<T>& grad_out, std::vector<T>& grad_alpha) {
    if (!pre.same_shape(grad_out)) throw ShapeError("prelu_backward_alpha: shape mismatch");
    grad_alpha.assign(static_cast<std::size_t>(pre.channels()), T(0));
    const std::size_t plane = pre.plane_size();
    for (int c = 0; c < pre.channels(); ++c) {
        const T* v = pre.channel_ptr(c);
        const T* g = grad_out.channel_ptr(c);
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i)
            if (v[i] < T(0)) acc += v[i] * g[i];
        grad_alpha[c] = acc;
    }
}

template <typename T>
Tensor<T> upsample_nn2(const Tensor<T>& x) {
    Tensor<T> out(x.channels(), x.height() * 2, x.width() * 2);
    for (int c = 0; c < x.channels(); ++c) {
        for (int y = 0; y < x.height(); ++y) {
            for (int xx = 0; xx < x.width(); ++xx) {
                const T v = x.at(c, y, xx);
                out.at(c, 2 * y, 2 * xx) = v;
                out.at(c, 2 * y, 2 * xx + 1) = v;
                out.at(c, 2 * y + 1, 2 * xx) = v;
                out.at(c, 2 * y + 1, 2 * xx + 1) = v;
            }
        }
    }
    return out;
}

template <typename T>
void BafModel<T>::validate() const {
    conv1.validate();
    conv2.validate();
    conv3.validate();
    conv4.validate();
    frozen_conv.validate();
    frozen_bn.validate();
    if (order.empty()) throw ShapeError("baf: empty channel selection");
    if (conv1.in_channels != C()) throw ShapeError("baf: conv1 input != C");
    if (conv1.out_channels != hidden || conv2.in_channels != hidden || conv2.out_channels != hidden ||
        conv3.in_channels != hidden || conv3.out_channels != hidden || conv4.in_channels != hidden)
        throw ShapeError("baf: hidden widths inconsistent");
    if (conv4.out_channels != frozen_conv.in_channels) throw ShapeError("baf: conv4 output != Q");
    if (conv1.stride != 1 || conv2.stride != 1 || conv3.stride != 1 || conv4.stride != 1)
        throw ShapeError("baf: trainable convs must have stride 1");
    if (frozen_conv.stride != 2) throw ShapeError("baf: frozen conv must have stride 2");
    if (frozen_bn.channels() != frozen_conv.out_channels) throw ShapeError("baf: frozen BN channels != P");
    if (alpha1.size() != static_cast<std::size_t>(conv1.out_channels) ||
        alpha2.size() != static_cast<std::size_t>(conv2.out_channels) ||
        alpha3.size() != static_cast<std::size_t>(conv3.out_channels))
        throw ShapeError("baf: PReLU alpha counts inconsistent");
    for (int p : order)
        if (p < 0 || p >= P()) throw ShapeError("baf: selection index outside [0, P)");
}

namespace {

ConvLayer<float> init_conv(int in_ch, int out_ch, DetRng& rng) {
    ConvLayer<float> c;
    c.in_channels = in_ch;
    c.out_channels = out_ch;
    c.kernel_size = 3;
    c.stride = 1;
    const float bound = std::sqrt(1.0f / (static_cast<float>(in_ch) * 9.0f));
    c.weights.resize(static_cast<std::size_t>(out_ch) * in_ch * 9);
    for (auto& w : c.weights) w = rng.uniform_f(-bound, bound);
    c.bias.assign(static_cast<std::size_t>(out_ch), 0.0f);
    return c;
}

// Per-channel slice of the host affine covering only the transmitted
// channels; only those arrive at the predictor input.
template <typename T>
BnAffine<T> slice_bn(const BnAffine<T>& bn, const std::vector<int>& order) {
    BnAffine<T> out;
    out.scale.reserve(order.size());
    out.bias.reserve(order.size());
    for (int p : order) {
        if (p < 0 || p >= bn.channels()) throw ShapeError("baf: selection index outside BN channels");
        out.scale.push_back(bn.scale[static_cast<std::size_t>(p)]);
        out.bias.push_back(bn.bias[static_cast<std::size_t>(p)]);
    }
    return out;
}

template <typename T>
struct BafTrace {
    Tensor<T> up, c1, a1, c2, a2, c3, a3, x_tilde, zf, z_tilde;
};

template <typename T>
BafTrace<T> run_forward(const Tensor<T>& zc_hat, const BafModel<T>& model) {
    model.validate();
    if (zc_hat.channels() != model.C()) throw ShapeError("baf_forward: input channels != C");
    BnAffine<T> sel = slice_bn(model.frozen_bn, model.order);
    Tensor<T> u0 = bn_inverse(zc_hat, sel);
    BafTrace<T> t;
    t.up = upsample_nn2(u0);
    t.c1 = conv2d(t.up, model.conv1);
    t.a1 = prelu(t.c1, model.alpha1);
    t.c2 = conv2d(t.a1, model.conv2);
    t.a2 = prelu(t.c2, model.alpha2);
    t.c3 = conv2d(t.a2, model.conv3);
    t.a3 = prelu(t.c3, model.alpha3);
    t.x_tilde = conv2d(t.a3, model.conv4);
    t.zf = conv2d(t.x_tilde, model.frozen_conv);
    t.z_tilde = bn_forward(t.zf, model.frozen_bn);
    return t;
}

} // namespace

BafModel<float> init_baf_model(int hidden, const std::vector<int>& order, const ConvLayer<float>& frozen_conv,
                               const BnAffine<float>& frozen_bn, int n_bits, std::uint64_t seed) {
    if (hidden < 1) throw ConfigError("init_baf_model: hidden width must be positive");
    if (n_bits < 2 || n_bits > 8) throw ConfigError("init_baf_model: n_bits must be in [2, 8]");
    DetRng rng(seed);
    BafModel<float> m;
    m.hidden = hidden;
    m.n_bits = n_bits;
    m.order = order;
    m.frozen_conv = frozen_conv;
    m.frozen_bn = frozen_bn;
    const int C = static_cast<int>(order.size());
    const int Q = frozen_conv.in_channels;
    m.conv1 = init_conv(C, hidden, rng);
    m.conv2 = init_conv(hidden, hidden, rng);
    m.conv3 = init_conv(hidden, hidden, rng);
    m.conv4 = init_conv(hidden, Q, rng);
    m.alpha1.assign(static_cast<std::size_t>(hidden), 0.25f);
    m.alpha2.assign(static_cast<std::size_t>(hidden), 0.25f);
    m.alpha3.assign(static_cast<std::size_t>(hidden), 0.25f);
    m.validate();
    return m;
}

template <typename T>
BafForwardResult<T> baf_forward(const Tensor<T>& zc_hat, const BafModel<T>& model) {
    BafTrace<T> t = run_forward(zc_hat, model);
    return {std::move(t.x_tilde), std::move(t.z_tilde)};
}

template <typename T>
void consolidate_channel(const std::uint8_t* codes, int h, int w, half_bits m, half_bits M, int n_bits, T* z) {
    const double lo = static_cast<double>(half_to_float(m));
    const double hi = static_cast<double>(half_to_float(M));
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const unsigned limit = 1u << n_bits;
    if (lo == hi) {
        for (std::size_t i = 0; i < n; ++i) {
            if (codes[i] >= limit) throw DataError("consolidate: code out of range");
            z[i] = static_cast<T>(lo);
        }
        return;
    }
    const double step = (hi - lo) / static_cast<double>(limit - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (codes[i] >= limit) throw DataError("consolidate: code out of range");
        const double k = static_cast<double>(codes[i]);
        const double bin_lo = lo + (k - 0.5) * step;
        const double bin_hi = lo + (k + 0.5) * step;
        const double v = static_cast<double>(z[i]);
        z[i] = static_cast<T>(v < bin_lo ? bin_lo : (v > bin_hi ? bin_hi : v));
    }
}

template <typename T>
void consolidate(Tensor<T>& z_tilde, const QuantizedPack& pack) {
    pack.validate();
    if (z_tilde.height() != pack.channel_h || z_tilde.width() != pack.channel_w)
        throw ShapeError("consolidate: spatial dims do not match pack");
    for (int i = 0; i < pack.C(); ++i) {
        const int p = pack.order[static_cast<std::size_t>(i)];
        if (p < 0 || p >= z_tilde.channels()) throw ShapeError("consolidate: selection index outside prediction");
        const auto& [m, M] = pack.side_info[static_cast<std::size_t>(i)];
        consolidate_channel(pack.channel_codes(i), pack.channel_h, pack.channel_w, m, M, pack.n_bits,
                            z_tilde.channel_ptr(p));
    }
}

template <typename T>
double charbonnier_loss(const Tensor<T>& y_target, const Tensor<T>& z_tilde, const ActivationFn& sigma, double eps) {
    if (!y_target.same_shape(z_tilde)) throw ShapeError("charbonnier_loss: shape mismatch");
    const std::size_t n = y_target.size();
    const double e2 = eps * eps;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = static_cast<double>(y_target.data()[i]) - static_cast<double>(sigma(z_tilde.data()[i]));
        loss += std::sqrt(r * r + e2);
    }
    return loss;
}

template <typename T>
void BafGrads<T>::resize_for(const BafModel<T>& model) {
    conv1_w.resize(model.conv1.weights.size());
    conv1_b.resize(model.conv1.bias.size());
    alpha1.resize(model.alpha1.size());
    conv2_w.resize(model.conv2.weights.size());
    conv2_b.resize(model.conv2.bias.size());
    alpha2.resize(model.alpha2.size());
    conv3_w.resize(model.conv3.weights.size());
    conv3_b.resize(model.conv3.bias.size());
    alpha3.resize(model.alpha3.size());
    conv4_w.resize(model.conv4.weights.size());
    conv4_b.resize(model.conv4.bias.size());
}

template <typename T>
void BafGrads<T>::zero() {
    auto z = [](std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); };
    z(conv1_w);
    z(conv1_b);
    z(alpha1);
    z(conv2_w);
    z(conv2_b);
    z(alpha2);
    z(conv3_w);
    z(conv3_b);
    z(alpha3);
    z(conv4_w);
    z(conv4_b);
}

template <typename T>
void BafGrads<T>::accumulate(const BafGrads<T>& other, T weight) {
    auto acc = [weight](std::vector<T>& dst, const std::vector<T>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
    };
    acc(conv1_w, other.conv1_w);
    acc(conv1_b, other.conv1_b);
    acc(alpha1, other.alpha1);
    acc(conv2_w, other.conv2_w);
    acc(conv2_b, other.conv2_b);
    acc(alpha2, other.alpha2);
    acc(conv3_w, other.conv3_w);
    acc(conv3_b, other.conv3_b);
    acc(alpha3, other.alpha3);
    acc(conv4_w, other.conv4_w);
    acc(conv4_b, other.conv4_b);
}

template <typename T>
double baf_backward(const BafModel<T>& model, const Tensor<T>& zc_hat, const Tensor<T>& y_target,
                    const ActivationFn& sigma, double eps, BafGrads<T>& grads) {
    BafTrace<T> t = run_forward(zc_hat, model);
    if (!y_target.same_shape(t.z_tilde)) throw ShapeError("baf_backward: target shape mismatch");
    grads.resize_for(model);

    Tensor<T> g_zt(t.z_tilde.channels(), t.z_tilde.height(), t.z_tilde.width());
    const double e2 = eps * eps;
    double loss = 0.0;
    for (std::size_t i = 0; i < t.z_tilde.size(); ++i) {
        const T z = t.z_tilde.data()[i];
        const double r = static_cast<double>(y_target.data()[i]) - static_cast<double>(sigma(z));
        const double den = std::sqrt(r * r + e2);
        loss += den;
        g_zt.data()[i] = static_cast<T>(-static_cast<double>(sigma.grad(z)) * r / den);
    }

    Tensor<T> g_zf = bn_backward_input(g_zt, model.frozen_bn);
    Tensor<T> g_xt = conv2d_backward_input(g_zf, model.frozen_conv, t.x_tilde.height(), t.x_tilde.width());

    conv2d_backward_params(t.a3, g_xt, model.conv4, grads.conv4_w, grads.conv4_b);
    Tensor<T> g_a3 = conv2d_backward_input(g_xt, model.conv4, t.a3.height(), t.a3.width());
    Tensor<T> g_c3 = prelu_backward_input(t.c3, g_a3, model.alpha3);
    prelu_backward_alpha(t.c3, g_a3, grads.alpha3);

    conv2d_backward_params(t.a2, g_c3, model.conv3, grads.conv3_w, grads.conv3_b);
    Tensor<T> g_a2 = conv2d_backward_input(g_c3, model.conv3, t.a2.height(), t.a2.width());
    Tensor<T> g_c2 = prelu_backward_input(t.c2, g_a2, model.alpha2);
    prelu_backward_alpha(t.c2, g_a2, grads.alpha2);

    conv2d_backward_params(t.a1, g_c2, model.conv2, grads.conv2_w, grads.conv2_b);
    Tensor<T> g_a1 = conv2d_backward_input(g_c2, model.conv2, t.a1.height(), t.a1.width());
    Tensor<T> g_c1 = prelu_backward_input(t.c1, g_a1, model.alpha1);
    prelu_backward_alpha(t.c1, g_a1, grads.alpha1);

    // conv1's input (the upsampled inverse-BN'd channels) has nothing
    // trainable upstream, so the input gradient stops here.
    conv2d_backward_params(t.up, g_c1, model.conv1, grads.conv1_w, grads.conv1_b);

    return loss;
}

void TrainConfig::validate() const {
    if (epsilon <= 0.0) throw ConfigError("train: epsilon must be positive");
    if (batch < 1) throw ConfigError("train: batch size must be positive");
    if (iterations < 0) throw ConfigError("train: iteration count must be non-negative");
    if (lr < 0.0) throw ConfigError("train: learning rate must be non-negative");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("train: holdout fraction in [0, 1)");
    if (eval_interval < 1) throw ConfigError("train: eval interval must be positive");
}

namespace {

// Flat views over every trainable parameter, in a fixed order shared with
// the gradient struct.
template <typename T>
std::vector<std::vector<T>*> param_views(BafModel<T>& m) {
    return {&m.conv1.weights, &m.conv1.bias, &m.alpha1, &m.conv2.weights, &m.conv2.bias, &m.alpha2,
            &m.conv3.weights, &m.conv3.bias, &m.alpha3, &m.conv4.weights, &m.conv4.bias};
}

template <typename T>
std::vector<const std::vector<T>*> grad_views(const BafGrads<T>& g) {
    return {&g.conv1_w, &g.conv1_b, &g.alpha1, &g.conv2_w, &g.conv2_b, &g.alpha2,
            &g.conv3_w, &g.conv3_b, &g.alpha3, &g.conv4_w, &g.conv4_b};
}

} // namespace

template <typename T>
BafModel<T> train_baf(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& dataset, const BafModel<T>& init,
                      const ActivationFn& sigma, const TrainConfig& cfg, TrainReport* report) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train_baf: empty dataset");
    init.validate();

    DetRng rng(cfg.seed);
    std::vector<std::size_t> indices(dataset.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    rng.shuffle(indices);
    const std::size_t n_hold = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(dataset.size()));
    std::vector<std::size_t> hold(indices.begin(), indices.begin() + n_hold);
    std::vector<std::size_t> train(indices.begin() + n_hold, indices.end());
    if (train.empty()) throw ConfigError("train_baf: holdout leaves no training pairs");
    // Selection loss comes from the holdout when one exists, otherwise from
    // the full dataset.
    const std::vector<std::size_t>& eval_set = hold.empty() ? indices : hold;

    BafModel<T> model = init;
    auto params = param_views(model);
    std::size_t total = 0;
    for (auto* v : params) total += v->size();
    std::vector<double> adam_m(total, 0.0), adam_v(total, 0.0);

    auto eval_loss = [&](const BafModel<T>& m) {
        double sum = 0.0;
        for (std::size_t idx : eval_set) {
            BafForwardResult<T> f = baf_forward(dataset[idx].first, m);
            sum += charbonnier_loss(dataset[idx].second, f.z_tilde, sigma, cfg.epsilon);
        }
        return sum / static_cast<double>(eval_set.size());
    };

    BafModel<T> best = model;
    double best_loss = eval_loss(model);
    int best_iter = 0;
    if (report) {
        report->loss_history.clear();
        report->best_eval_loss = best_loss;
        report->best_iteration = 0;
    }

    BafGrads<T> batch_grads, sample_grads;
    batch_grads.resize_for(model);

    int adam_t = 0;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        batch_grads.zero();
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t idx = train[static_cast<std::size_t>(rng.below(train.size()))];
            batch_loss += baf_backward(model, dataset[idx].first, dataset[idx].second, sigma, cfg.epsilon, sample_grads);
            batch_grads.accumulate(sample_grads, T(1) / static_cast<T>(cfg.batch));
        }
        batch_loss /= static_cast<double>(cfg.batch);
        if (!std::isfinite(batch_loss))
            throw TrainingError("train_baf: loss diverged at iteration " + std::to_string(iter));
        if (report) report->loss_history.push_back(batch_loss);

        ++adam_t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, adam_t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, adam_t);
        auto grads = grad_views(batch_grads);
        std::size_t off = 0;
        for (std::size_t s = 0; s < params.size(); ++s) {
            std::vector<T>& p = *params[s];
            const std::vector<T>& g = *grads[s];
            for (std::size_t i = 0; i < p.size(); ++i, ++off) {
                const double gi = static_cast<double>(g[i]);
                adam_m[off] = cfg.beta1 * adam_m[off] + (1.0 - cfg.beta1) * gi;
                adam_v[off] = cfg.beta2 * adam_v[off] + (1.0 - cfg.beta2) * gi * gi;
                const double update = cfg.lr * (adam_m[off] / bc1) / (std::sqrt(adam_v[off] / bc2) + cfg.adam_eps);
                p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
            }
        }

        if ((iter + 1) % cfg.eval_interval == 0 || iter + 1 == cfg.iterations) {
            const double l = eval_loss(model);
            if (!std::isfinite(l))
                throw TrainingError("train_baf: selection loss diverged at iteration " + std::to_string(iter + 1));
            if (l < best_loss) {
                best_loss = l;
                best = model;
                best_iter = iter + 1;
            }
        }
    }

    if (report) {
        report->best_eval_loss = best_loss;
        report->best_iteration = best_iter;
    }
    return best;
}

// ---- BAFM serialization ----------------------------------------------------

namespace {

constexpr std::uint8_t kBafMagic[4] = {'B', 'A', 'F', 'M'};
constexpr std::uint8_t kBafVersion = 1;

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
    for (float f : v) put_f32le(out, f);
}

std::vector<float> get_floats(const std::uint8_t*& p, const std::uint8_t* end, std::size_t count) {
    if (static_cast<std::size_t>(end - p) < count * 4) throw DataError("BAFM: truncated parameters");
    std::vector<float> v(count);
    for (std::size_t i = 0; i < count; ++i, p += 4) v[i] = get_f32le(p);
    return v;
}

} // namespace

std::uint32_t frozen_weights_hash(const ConvLayer<float>& conv, const BnAffine<float>& bn) {
    std::vector<std::uint8_t> bytes;
    put_floats(bytes, conv.weights);
    put_floats(bytes, conv.bias);
    put_floats(bytes, bn.scale);
    put_floats(bytes, bn.bias);
    return fnv1a32(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> baf_model_bytes(const BafModel<float>& model) {
    model.validate();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kBafMagic, kBafMagic + 4);
    out.push_back(kBafVersion);
    out.push_back(static_cast<std::uint8_t>(model.n_bits));
    out.push_back(static_cast<std::uint8_t>(model.conv1.kernel_size));
    out.push_back(0);
    put_u32le(out, static_cast<std::uint32_t>(model.C()));
    put_u32le(out, static_cast<std::uint32_t>(model.Q()));
    put_u32le(out, static_cast<std::uint32_t>(model.P()));
    put_u32le(out, static_cast<std::uint32_t>(model.hidden));
    put_u32le(out, frozen_weights_hash(model.frozen_conv, model.frozen_bn));
    for (int p : model.order) put_u16le(out, static_cast<std::uint16_t>(p));
    put_floats(out, model.conv1.weights);
    put_floats(out, model.conv1.bias);
    put_floats(out, model.alpha1);
    put_floats(out, model.conv2.weights);
    put_floats(out, model.conv2.bias);
    put_floats(out, model.alpha2);
    put_floats(out, model.conv3.weights);
    put_floats(out, model.conv3.bias);
    put_floats(out, model.alpha3);
    put_floats(out, model.conv4.weights);
    put_floats(out, model.conv4.bias);
    put_floats(out, model.frozen_conv.weights);
    put_floats(out, model.frozen_conv.bias);
    put_floats(out, model.frozen_bn.scale);
    put_floats(out, model.frozen_bn.bias);
    return out;
}

BafModel<float> parse_baf_model(const std::uint8_t* data, std::size_t size) {
    if (size < 28) throw DataError("BAFM: shorter than fixed header");
    if (std::memcmp(data, kBafMagic, 4) != 0) throw DataError("BAFM: bad magic");
    if (data[4] != kBafVersion) throw DataError("BAFM: unsupported version");
    BafModel<float> m;
    m.n_bits = data[5];
    const int kernel = data[6];
    const int C = static_cast<int>(get_u32le(data + 8));
    const int Q = static_cast<int>(get_u32le(data + 12));
    const int P = static_cast<int>(get_u32le(data + 16));
    m.hidden = static_cast<int>(get_u32le(data + 20));
    const std::uint32_t stored_hash = get_u32le(data + 24);
    if (m.n_bits < 2 || m.n_bits > 8) throw DataError("BAFM: quantizer depth out of range");
    if (C < 1 || Q < 1 || P < 1 || m.hidden < 1 || kernel < 1 || kernel % 2 == 0 || C > 65535)
        throw DataError("BAFM: bad dimensions");
    if (size < 28 + static_cast<std::size_t>(C) * 2) throw DataError("BAFM: truncated order");
    const std::uint8_t* p = data + 28;
    m.order.resize(static_cast<std::size_t>(C));
    for (int i = 0; i < C; ++i, p += 2) m.order[static_cast<std::size_t>(i)] = get_u16le(p);
    const std::uint8_t* end = data + size;

    auto read_conv = [&](int in_ch, int out_ch, int stride) {
        ConvLayer<float> c;
        c.in_channels = in_ch;
        c.out_channels = out_ch;
        c.kernel_size = kernel;
        c.stride = stride;
        c.weights = get_floats(p, end, static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel);
        c.bias = get_floats(p, end, static_cast<std::size_t>(out_ch));
        return c;
    };
    m.conv1 = read_conv(C, m.hidden, 1);
    m.alpha1 = get_floats(p, end, static_cast<std::size_t>(m.hidden));
    m.conv2 = read_conv(m.hidden, m.hidden, 1);
    m.alpha2 = get_floats(p, end, static_cast<std::size_t>(m.hidden));
    m.conv3 = read_conv(m.hidden, m.hidden, 1);
    m.alpha3 = get_floats(p, end, static_cast<std::size_t>(m.hidden));
    m.conv4 = read_conv(m.hidden, Q, 1);
    m.frozen_conv = read_conv(Q, P, 2);
    m.frozen_bn.scale = get_floats(p, end, static_cast<std::size_t>(P));
    m.frozen_bn.bias = get_floats(p, end, static_cast<std::size_t>(P));
    if (p != end) throw DataError("BAFM: trailing bytes");
    if (frozen_weights_hash(m.frozen_conv, m.frozen_bn) != stored_hash)
        throw DataError("BAFM: frozen-weight hash mismatch");
    try {
        m.validate();
    } catch (const ShapeError& e) {
        throw DataError(std::string("BAFM: inconsistent model: ") + e.what());
    }
    return m;
}

void write_baf_model(const std::string& path, const BafModel<float>& model) {
    write_file_bytes(path, baf_model_bytes(model));
}

BafModel<float> read_baf_model(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return parse_baf_model(bytes.data(), bytes.size());
}

// ---- explicit instantiations ------------------------------------------------

template Tensor<float> prelu(const Tensor<float>&, const std::vector<float>&);
template Tensor<double> prelu(const Tensor<double>&, const std::vector<double>&);
template Tensor<float> prelu_backward_input(const Tensor<float>&, const Tensor<float>&, const std::vector<float>&);
template Tensor<double> prelu_backward_input(const Tensor<double>&, const Tensor<double>&, const std::vector<double>&);
template void prelu_backward_alpha(const Tensor<float>&, const Tensor<float>&, std::vector<float>&);
template void prelu_backward_alpha(const Tensor<double>&, const Tensor<double>&, std::vector<double>&);
template Tensor<float> upsample_nn2(const Tensor<float>&);
template Tensor<double> upsample_nn2(const Tensor<double>&);
template struct BafModel<float>;
template struct BafModel<double>;
template struct BafGrads<float>;
template struct BafGrads<double>;
template BafForwardResult<float> baf_forward(const Tensor<float>&, const BafModel<float>&);
template BafForwardResult<double> baf_forward(const Tensor<double>&, const BafModel<double>&);
template void consolidate_channel(const std::uint8_t*, int, int, half_bits, half_bits, int, float*);
template void consolidate_channel(const std::uint8_t*, int, int, half_bits, half_bits, int, double*);
template void consolidate(Tensor<float>&, const QuantizedPack&);
template void consolidate(Tensor<double>&, const QuantizedPack&);
template double charbonnier_loss(const Tensor<float>&, const Tensor<float>&, const ActivationFn&, double);
template double charbonnier_loss(const Tensor<double>&, const Tensor<double>&, const ActivationFn&, double);
template double baf_backward(const BafModel<float>&, const Tensor<float>&, const Tensor<float>&, const ActivationFn&,
                             double, BafGrads<float>&);
template double baf_backward(const BafModel<double>&, const Tensor<double>&, const Tensor<double>&,
                             const ActivationFn&, double, BafGrads<double>&);
template BafModel<float> train_baf(const std::vector<std::pair<Tensor<float>, Tensor<float>>>&, const BafModel<float>&,
                                   const ActivationFn&, const TrainConfig&, TrainReport*);
template BafModel<double> train_baf(const std::vector<std::pair<Tensor<double>, Tensor<double>>>&,
                                    const BafModel<double>&, const ActivationFn&, const TrainConfig&, TrainReport*);

} // namespace bafc
