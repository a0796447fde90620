#include "bafc/surrogate.hpp"

#include <cmath>
#include <cstring>

#include "bafc/errors.hpp"
#include "bafc/grad_ops.hpp"
#include "bafc/util.hpp"

namespace bafc {

Dataset gen_synthetic_dataset(std::uint64_t seed, int count, int K) {
    if (K < 2) throw ConfigError("gen_synthetic_dataset: need at least 2 classes");
    if (count < K) throw ConfigError("gen_synthetic_dataset: count must be >= K");
    const int side = 32;
    DetRng rng(seed);
    Dataset data;
    data.num_classes = K;
    data.items.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int label = i % K;
        // Class identity is carried by both mean intensity (well separated)
        // and stripe orientation; per-image phase/period/noise vary.
        const float mean = 0.2f + 0.6f * static_cast<float>(label) / static_cast<float>(K - 1);
        const int period = rng.below(2) == 0 ? 4 : 8;
        const int phase = static_cast<int>(rng.below(static_cast<std::uint64_t>(period)));
        const float amp = 0.1f;
        Tensor<float> img(1, side, side);
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
                int t;
                switch (label % 4) {
                case 0:
                    t = y;
                    break;
                case 1:
                    t = x;
                    break;
                case 2:
                    t = (y / period + x / period) * period; // checker blocks
                    break;
                default:
                    t = x + y;
                    break;
                }
                const float stripe = ((t + phase) / period) % 2 == 0 ? 1.0f : -1.0f;
                float v = mean + amp * stripe + rng.uniform_f(-0.03f, 0.03f);
                img.at(0, y, x) = std::min(1.0f, std::max(0.0f, v));
            }
        }
        data.items.push_back({std::move(img), label});
    }
    std::vector<std::size_t> indices(data.items.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    rng.shuffle(indices);
    std::size_t n_val = count >= 2 ? std::max<std::size_t>(1, indices.size() / 5) : 0;
    data.val_idx.assign(indices.begin(), indices.begin() + n_val);
    data.train_idx.assign(indices.begin() + n_val, indices.end());
    return data;
}

void SurrogateNet::validate() const {
    if (front.pre.empty()) throw ShapeError("surrogate: no front stages");
    for (const auto& st : front.pre) {
        st.conv.validate();
        st.bn.validate();
        if (st.bn.channels() != st.conv.out_channels) throw ShapeError("surrogate: stage affine width mismatch");
    }
    front.split_conv.validate();
    front.split_bn.validate();
    if (front.split_conv.stride != 2) throw ShapeError("surrogate: split conv must have stride 2");
    if (front.split_bn.channels() != front.split_conv.out_channels)
        throw ShapeError("surrogate: split affine width mismatch");
    back_conv.validate();
    back_bn.validate();
    if (back_conv.in_channels != front.split_conv.out_channels) throw ShapeError("surrogate: back conv width mismatch");
    if (back_bn.channels() != back_conv.out_channels) throw ShapeError("surrogate: back affine width mismatch");
    if (fc_b.empty()) throw ShapeError("surrogate: empty classifier head");
    if (fc_w.size() != fc_b.size() * static_cast<std::size_t>(back_conv.out_channels))
        throw ShapeError("surrogate: classifier weight count mismatch");
}

namespace {

std::vector<float> gap(const Tensor<float>& t) {
    std::vector<float> pooled(static_cast<std::size_t>(t.channels()));
    const std::size_t plane = t.plane_size();
    for (int c = 0; c < t.channels(); ++c) {
        double s = 0.0;
        const float* p = t.channel_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        pooled[static_cast<std::size_t>(c)] = static_cast<float>(s / static_cast<double>(plane));
    }
    return pooled;
}

int argmax(const std::vector<float>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

} // namespace

std::vector<float> SurrogateNet::logits_from_z(const Tensor<float>& z) const {
    Tensor<float> y = activation(z, act);
    Tensor<float> bc = conv2d(y, back_conv);
    Tensor<float> bb = bn_forward(bc, back_bn);
    Tensor<float> ba = activation(bb, act);
    std::vector<float> pooled = gap(ba);
    const int K = num_classes();
    const int F = back_conv.out_channels;
    std::vector<float> logits(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        double s = fc_b[static_cast<std::size_t>(k)];
        for (int f = 0; f < F; ++f)
            s += static_cast<double>(fc_w[static_cast<std::size_t>(k) * F + f]) * pooled[static_cast<std::size_t>(f)];
        logits[static_cast<std::size_t>(k)] = static_cast<float>(s);
    }
    return logits;
}

int SurrogateNet::predict_from_z(const Tensor<float>& z) const { return argmax(logits_from_z(z)); }

int SurrogateNet::predict(const Tensor<float>& image) const {
    Tensor<float> x = front.forward_x(image);
    Tensor<float> z = front.forward_z_from_x(x);
    return predict_from_z(z);
}

void SurrogateTrainConfig::validate() const {
    if (Q < 1 || P < 1 || back_width < 1) throw ConfigError("surrogate train: widths must be positive");
    if (lr <= 0.0) throw ConfigError("surrogate train: learning rate must be positive");
    if (batch < 1 || iterations < 1) throw ConfigError("surrogate train: batch/iterations must be positive");
    if (target_accuracy < 0.0 || target_accuracy > 1.0) throw ConfigError("surrogate train: target accuracy in [0, 1]");
}

namespace {

ConvLayer<float> init_conv(int in_ch, int out_ch, int stride, DetRng& rng) {
    ConvLayer<float> c;
    c.in_channels = in_ch;
    c.out_channels = out_ch;
    c.kernel_size = 3;
    c.stride = stride;
    const float bound = std::sqrt(1.0f / (static_cast<float>(in_ch) * 9.0f));
    c.weights.resize(static_cast<std::size_t>(out_ch) * in_ch * 9);
    for (auto& w : c.weights) w = rng.uniform_f(-bound, bound);
    c.bias.assign(static_cast<std::size_t>(out_ch), 0.0f);
    return c;
}

BnAffine<float> init_bn(int ch) {
    BnAffine<float> bn;
    bn.scale.assign(static_cast<std::size_t>(ch), 1.0f);
    bn.bias.assign(static_cast<std::size_t>(ch), 0.0f);
    return bn;
}

std::vector<std::vector<float>*> surrogate_params(SurrogateNet& net) {
    std::vector<std::vector<float>*> p;
    for (auto& st : net.front.pre) {
        p.push_back(&st.conv.weights);
        p.push_back(&st.conv.bias);
        p.push_back(&st.bn.scale);
        p.push_back(&st.bn.bias);
    }
    p.push_back(&net.front.split_conv.weights);
    p.push_back(&net.front.split_conv.bias);
    p.push_back(&net.front.split_bn.scale);
    p.push_back(&net.front.split_bn.bias);
    p.push_back(&net.back_conv.weights);
    p.push_back(&net.back_conv.bias);
    p.push_back(&net.back_bn.scale);
    p.push_back(&net.back_bn.bias);
    p.push_back(&net.fc_w);
    p.push_back(&net.fc_b);
    return p;
}

// Cross-entropy loss and parameter gradients for one labeled image; gradient
// layout mirrors surrogate_params.
double surrogate_backward(const SurrogateNet& net, const Tensor<float>& image, int label,
                          std::vector<std::vector<float>>& grads) {
    const std::size_t n_stages = net.front.pre.size();
    std::vector<Tensor<float>> s, c, b;
    s.reserve(n_stages + 1);
    c.reserve(n_stages);
    b.reserve(n_stages);
    s.push_back(image);
    for (std::size_t i = 0; i < n_stages; ++i) {
        c.push_back(conv2d(s[i], net.front.pre[i].conv));
        b.push_back(bn_forward(c[i], net.front.pre[i].bn));
        s.push_back(activation(b[i], net.front.pre[i].act));
    }
    Tensor<float> zf = conv2d(s[n_stages], net.front.split_conv);
    Tensor<float> z = bn_forward(zf, net.front.split_bn);
    Tensor<float> y = activation(z, net.act);
    Tensor<float> bc = conv2d(y, net.back_conv);
    Tensor<float> bb = bn_forward(bc, net.back_bn);
    Tensor<float> ba = activation(bb, net.act);
    std::vector<float> pooled = gap(ba);

    const int K = net.num_classes();
    const int F = net.back_conv.out_channels;
    std::vector<double> logits(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        double sum = net.fc_b[static_cast<std::size_t>(k)];
        for (int f = 0; f < F; ++f)
            sum += static_cast<double>(net.fc_w[static_cast<std::size_t>(k) * F + f]) *
                   pooled[static_cast<std::size_t>(f)];
        logits[static_cast<std::size_t>(k)] = sum;
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - mx);
    const double loss = -(logits[static_cast<std::size_t>(label)] - mx - std::log(denom));

    // dL/dlogit = softmax - onehot
    std::vector<float> dlogits(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        dlogits[static_cast<std::size_t>(k)] =
            static_cast<float>(std::exp(logits[static_cast<std::size_t>(k)] - mx) / denom - (k == label ? 1.0 : 0.0));

    std::size_t gi = grads.size();
    std::vector<float>& g_fc_b = grads[--gi];
    std::vector<float>& g_fc_w = grads[--gi];
    g_fc_b.assign(static_cast<std::size_t>(K), 0.0f);
    g_fc_w.assign(static_cast<std::size_t>(K) * F, 0.0f);
    std::vector<float> dpooled(static_cast<std::size_t>(F), 0.0f);
    for (int k = 0; k < K; ++k) {
        const float dk = dlogits[static_cast<std::size_t>(k)];
        g_fc_b[static_cast<std::size_t>(k)] = dk;
        for (int f = 0; f < F; ++f) {
            g_fc_w[static_cast<std::size_t>(k) * F + f] = dk * pooled[static_cast<std::size_t>(f)];
            dpooled[static_cast<std::size_t>(f)] += dk * net.fc_w[static_cast<std::size_t>(k) * F + f];
        }
    }

    Tensor<float> dba(ba.channels(), ba.height(), ba.width());
    const float inv_plane = 1.0f / static_cast<float>(ba.plane_size());
    for (int f = 0; f < F; ++f) {
        float* dst = dba.channel_ptr(f);
        const float df = dpooled[static_cast<std::size_t>(f)] * inv_plane;
        for (std::size_t i = 0; i < ba.plane_size(); ++i) dst[i] = df;
    }

    Tensor<float> dbb = activation_backward(bb, dba, net.act);
    std::vector<float>& g_backbn_b = grads[--gi];
    std::vector<float>& g_backbn_s = grads[--gi];
    bn_backward_params(bc, dbb, g_backbn_s, g_backbn_b);
    Tensor<float> dbc = bn_backward_input(dbb, net.back_bn);
    std::vector<float>& g_back_b = grads[--gi];
    std::vector<float>& g_back_w = grads[--gi];
    conv2d_backward_params(y, dbc, net.back_conv, g_back_w, g_back_b);
    Tensor<float> dy = conv2d_backward_input(dbc, net.back_conv, y.height(), y.width());

    Tensor<float> dz = activation_backward(z, dy, net.act);
    std::vector<float>& g_splitbn_b = grads[--gi];
    std::vector<float>& g_splitbn_s = grads[--gi];
    bn_backward_params(zf, dz, g_splitbn_s, g_splitbn_b);
    Tensor<float> dzf = bn_backward_input(dz, net.front.split_bn);
    std::vector<float>& g_split_b = grads[--gi];
    std::vector<float>& g_split_w = grads[--gi];
    conv2d_backward_params(s[n_stages], dzf, net.front.split_conv, g_split_w, g_split_b);
    Tensor<float> ds = conv2d_backward_input(dzf, net.front.split_conv, s[n_stages].height(), s[n_stages].width());

    for (std::size_t i = n_stages; i-- > 0;) {
        Tensor<float> db = activation_backward(b[i], ds, net.front.pre[i].act);
        std::vector<float>& g_bn_b = grads[--gi];
        std::vector<float>& g_bn_s = grads[--gi];
        bn_backward_params(c[i], db, g_bn_s, g_bn_b);
        Tensor<float> dc = bn_backward_input(db, net.front.pre[i].bn);
        std::vector<float>& g_conv_b = grads[--gi];
        std::vector<float>& g_conv_w = grads[--gi];
        conv2d_backward_params(s[i], dc, net.front.pre[i].conv, g_conv_w, g_conv_b);
        if (i > 0) ds = conv2d_backward_input(dc, net.front.pre[i].conv, s[i].height(), s[i].width());
    }

    return loss;
}

} // namespace

SurrogateNet train_surrogate(const Dataset& data, std::uint64_t seed, const SurrogateTrainConfig& cfg) {
    cfg.validate();
    if (data.items.empty() || data.train_idx.empty()) throw DataError("train_surrogate: empty dataset");
    const int K = data.num_classes;
    if (K < 2) throw DataError("train_surrogate: need at least 2 classes");
    const Tensor<float>& first = data.items[0].image;
    for (const auto& it : data.items) {
        if (!it.image.same_shape(first)) throw ShapeError("train_surrogate: images differ in shape");
        if (it.label < 0 || it.label >= K) throw DataError("train_surrogate: label outside [0, K)");
    }

    DetRng rng(seed);
    SurrogateNet net;
    net.act = ActivationFn{Activation::leaky_relu, 0.1f};
    SplitFront::Stage stage;
    stage.conv = init_conv(first.channels(), cfg.Q, 1, rng);
    stage.bn = init_bn(cfg.Q);
    stage.act = net.act;
    net.front.pre.push_back(std::move(stage));
    net.front.split_conv = init_conv(cfg.Q, cfg.P, 2, rng);
    net.front.split_bn = init_bn(cfg.P);
    net.back_conv = init_conv(cfg.P, cfg.back_width, 1, rng);
    net.back_bn = init_bn(cfg.back_width);
    const float fc_bound = std::sqrt(1.0f / static_cast<float>(cfg.back_width));
    net.fc_w.resize(static_cast<std::size_t>(K) * cfg.back_width);
    for (auto& w : net.fc_w) w = rng.uniform_f(-fc_bound, fc_bound);
    net.fc_b.assign(static_cast<std::size_t>(K), 0.0f);
    net.validate();

    auto params = surrogate_params(net);
    std::size_t total = 0;
    for (auto* v : params) total += v->size();
    std::vector<double> adam_m(total, 0.0), adam_v(total, 0.0);
    std::vector<std::vector<float>> batch_grads(params.size()), sample_grads(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) batch_grads[i].assign(params[i]->size(), 0.0f);

    int adam_t = 0;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        for (auto& g : batch_grads) std::fill(g.begin(), g.end(), 0.0f);
        double batch_loss = 0.0;
        for (int bi = 0; bi < cfg.batch; ++bi) {
            const std::size_t idx = data.train_idx[static_cast<std::size_t>(rng.below(data.train_idx.size()))];
            batch_loss += surrogate_backward(net, data.items[idx].image, data.items[idx].label, sample_grads);
            for (std::size_t i = 0; i < params.size(); ++i)
                for (std::size_t j = 0; j < batch_grads[i].size(); ++j)
                    batch_grads[i][j] += sample_grads[i][j] / static_cast<float>(cfg.batch);
        }
        batch_loss /= static_cast<double>(cfg.batch);
        if (!std::isfinite(batch_loss))
            throw TrainingError("train_surrogate: loss diverged at iteration " + std::to_string(iter));

        ++adam_t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, adam_t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, adam_t);
        std::size_t off = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::vector<float>& p = *params[i];
            for (std::size_t j = 0; j < p.size(); ++j, ++off) {
                const double g = batch_grads[i][j];
                adam_m[off] = cfg.beta1 * adam_m[off] + (1.0 - cfg.beta1) * g;
                adam_v[off] = cfg.beta2 * adam_v[off] + (1.0 - cfg.beta2) * g * g;
                const double update = cfg.lr * (adam_m[off] / bc1) / (std::sqrt(adam_v[off] / bc2) + cfg.adam_eps);
                p[j] = static_cast<float>(static_cast<double>(p[j]) - update);
            }
        }
    }

    const std::vector<std::size_t>& eval_set = data.val_idx.empty() ? data.train_idx : data.val_idx;
    const double acc = evaluate_accuracy(net, data, eval_set);
    if (acc < cfg.target_accuracy)
        throw TrainingError("train_surrogate: validation accuracy " + std::to_string(acc) + " below target " +
                            std::to_string(cfg.target_accuracy));
    return net;
}

double evaluate_accuracy(const SurrogateNet& net, const Dataset& data, const std::vector<std::size_t>& subset,
                         int threads) {
    if (subset.empty()) throw DataError("evaluate_accuracy: empty subset");
    std::vector<std::uint8_t> correct(subset.size(), 0);
    parallel_for_indexed(subset.size(), threads, [&](std::size_t i) {
        const LabeledImage& item = data.items[subset[i]];
        correct[i] = net.predict(item.image) == item.label ? 1 : 0;
    });
    std::size_t n_ok = 0;
    for (std::uint8_t c : correct) n_ok += c;
    return static_cast<double>(n_ok) / static_cast<double>(subset.size());
}

// ---- SNET serialization -----------------------------------------------------

namespace {

constexpr std::uint8_t kSnetMagic[4] = {'S', 'N', 'E', 'T'};
constexpr std::uint8_t kSnetVersion = 1;

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
    for (float f : v) put_f32le(out, f);
}

std::vector<float> get_floats(const std::uint8_t*& p, const std::uint8_t* end, std::size_t count) {
    if (static_cast<std::size_t>(end - p) < count * 4) throw DataError("SNET: truncated parameters");
    std::vector<float> v(count);
    for (std::size_t i = 0; i < count; ++i, p += 4) v[i] = get_f32le(p);
    return v;
}

void put_conv(std::vector<std::uint8_t>& out, const ConvLayer<float>& c) {
    put_u32le(out, static_cast<std::uint32_t>(c.in_channels));
    put_u32le(out, static_cast<std::uint32_t>(c.out_channels));
    put_u32le(out, static_cast<std::uint32_t>(c.kernel_size));
    put_u32le(out, static_cast<std::uint32_t>(c.stride));
    put_floats(out, c.weights);
    put_floats(out, c.bias);
}

ConvLayer<float> get_conv(const std::uint8_t*& p, const std::uint8_t* end) {
    if (end - p < 16) throw DataError("SNET: truncated layer header");
    ConvLayer<float> c;
    c.in_channels = static_cast<int>(get_u32le(p));
    c.out_channels = static_cast<int>(get_u32le(p + 4));
    c.kernel_size = static_cast<int>(get_u32le(p + 8));
    c.stride = static_cast<int>(get_u32le(p + 12));
    p += 16;
    if (c.in_channels < 1 || c.out_channels < 1 || c.in_channels > 65535 || c.out_channels > 65535 ||
        c.kernel_size < 1 || c.kernel_size > 15 || c.kernel_size % 2 == 0 || (c.stride != 1 && c.stride != 2))
        throw DataError("SNET: bad layer dimensions");
    c.weights = get_floats(p, end, static_cast<std::size_t>(c.out_channels) * c.in_channels * c.kernel_size *
                                       c.kernel_size);
    c.bias = get_floats(p, end, static_cast<std::size_t>(c.out_channels));
    return c;
}

} // namespace

std::vector<std::uint8_t> surrogate_bytes(const SurrogateNet& net) {
    net.validate();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kSnetMagic, kSnetMagic + 4);
    out.push_back(kSnetVersion);
    out.push_back(static_cast<std::uint8_t>(net.act.kind));
    put_u16le(out, 0);
    put_f32le(out, net.act.slope);
    put_u32le(out, static_cast<std::uint32_t>(net.num_classes()));
    put_u32le(out, static_cast<std::uint32_t>(net.front.pre.size()));
    for (const auto& st : net.front.pre) {
        put_conv(out, st.conv);
        put_floats(out, st.bn.scale);
        put_floats(out, st.bn.bias);
    }
    put_conv(out, net.front.split_conv);
    put_floats(out, net.front.split_bn.scale);
    put_floats(out, net.front.split_bn.bias);
    put_conv(out, net.back_conv);
    put_floats(out, net.back_bn.scale);
    put_floats(out, net.back_bn.bias);
    put_floats(out, net.fc_w);
    put_floats(out, net.fc_b);
    return out;
}

SurrogateNet parse_surrogate(const std::uint8_t* data, std::size_t size) {
    if (size < 20) throw DataError("SNET: shorter than fixed header");
    if (std::memcmp(data, kSnetMagic, 4) != 0) throw DataError("SNET: bad magic");
    if (data[4] != kSnetVersion) throw DataError("SNET: unsupported version");
    SurrogateNet net;
    if (data[5] > 1) throw DataError("SNET: unknown activation kind");
    net.act.kind = static_cast<Activation>(data[5]);
    net.act.slope = get_f32le(data + 8);
    if (!std::isfinite(net.act.slope)) throw DataError("SNET: non-finite activation slope");
    const int K = static_cast<int>(get_u32le(data + 12));
    const int n_pre = static_cast<int>(get_u32le(data + 16));
    if (K < 2 || K > 4096 || n_pre < 1 || n_pre > 64) throw DataError("SNET: bad head dimensions");
    const std::uint8_t* p = data + 20;
    const std::uint8_t* end = data + size;
    for (int i = 0; i < n_pre; ++i) {
        SplitFront::Stage st;
        st.conv = get_conv(p, end);
        st.bn.scale = get_floats(p, end, static_cast<std::size_t>(st.conv.out_channels));
        st.bn.bias = get_floats(p, end, static_cast<std::size_t>(st.conv.out_channels));
        st.act = net.act;
        net.front.pre.push_back(std::move(st));
    }
    net.front.split_conv = get_conv(p, end);
    net.front.split_bn.scale = get_floats(p, end, static_cast<std::size_t>(net.front.split_conv.out_channels));
    net.front.split_bn.bias = get_floats(p, end, static_cast<std::size_t>(net.front.split_conv.out_channels));
    net.back_conv = get_conv(p, end);
    net.back_bn.scale = get_floats(p, end, static_cast<std::size_t>(net.back_conv.out_channels));
    net.back_bn.bias = get_floats(p, end, static_cast<std::size_t>(net.back_conv.out_channels));
    net.fc_w = get_floats(p, end, static_cast<std::size_t>(K) * net.back_conv.out_channels);
    net.fc_b = get_floats(p, end, static_cast<std::size_t>(K));
    if (p != end) throw DataError("SNET: trailing bytes");
    try {
        net.validate();
    } catch (const ShapeError& e) {
        throw DataError(std::string("SNET: inconsistent network: ") + e.what());
    }
    return net;
}

void write_surrogate(const std::string& path, const SurrogateNet& net) {
    write_file_bytes(path, surrogate_bytes(net));
}

SurrogateNet read_surrogate(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return parse_surrogate(bytes.data(), bytes.size());
}

} // namespace bafc
