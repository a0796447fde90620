// Acceptance gate for the compression toolkit: nine criteria, one pass/fail
// line each, nonzero exit if any fail. Every criterion is deterministic and
// carries a wall-clock budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bafc/errors.hpp"
#include "bafc/half.hpp"
#include "bafc/pipeline.hpp"
#include "bafc/util.hpp"

using namespace bafc;

namespace {

struct Failure : std::runtime_error {
    explicit Failure(const std::string& msg) : std::runtime_error(msg) {}
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw Failure(msg);
}

bool packs_equal(const QuantizedPack& a, const QuantizedPack& b) {
    return a.n_bits == b.n_bits && a.channel_h == b.channel_h && a.channel_w == b.channel_w && a.order == b.order &&
           a.codes == b.codes && a.side_info == b.side_info;
}

// ---- 1. quantizer round-trip ------------------------------------------------

std::string c1_quantizer_roundtrip() {
    DetRng rng(101);
    double worst = 0.0;
    long long channels = 0;
    for (int n = 2; n <= 8; ++n) {
        for (int t = 0; t < 1000; ++t) {
            const int h = 1 + static_cast<int>(rng.below(12));
            const int w = 1 + static_cast<int>(rng.below(12));
            std::vector<float> z(static_cast<std::size_t>(h) * w);
            if (t % 97 == 0) {
                const float v = static_cast<float>(rng.uniform(-8.0, 8.0));
                std::fill(z.begin(), z.end(), v); // degenerate constant channel
            } else {
                for (auto& v : z) v = static_cast<float>(rng.uniform(-8.0, 8.0));
            }
            std::vector<std::uint8_t> codes(z.size());
            half_bits m = 0, M = 0;
            quantize_channel(z.data(), h, w, n, codes.data(), m, M);
            std::vector<float> back(z.size());
            dequantize_channel(codes.data(), h, w, m, M, n, back.data());
            const double lo = half_to_float(m), hi = half_to_float(M);
            const double bound = (hi - lo) / (2.0 * static_cast<double>((1 << n) - 1)) + 1e-6;
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double err = std::abs(static_cast<double>(back[i]) - static_cast<double>(z[i]));
                if (err > bound)
                    throw Failure(fmt("n=%d channel %d: |dequant-z| = %.3g exceeds bound %.3g", n, t, err, bound));
                if (bound > 0.0) worst = std::max(worst, err / bound);
            }
            ++channels;
        }
    }
    return fmt("%lld channels across n=2..8, worst error %.1f%% of bound", channels, 100.0 * worst);
}

// ---- 2. bitstream round-trip + fuzz -----------------------------------------

QuantizedPack random_pack(DetRng& rng, int max_log2_c, int max_dim) {
    QuantizedPack pack;
    pack.n_bits = 2 + static_cast<int>(rng.below(7));
    pack.channel_h = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dim)));
    pack.channel_w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dim)));
    const int C = 1 << rng.below(static_cast<std::uint64_t>(max_log2_c) + 1);
    const int P = C + static_cast<int>(rng.below(40));
    std::vector<int> idx(static_cast<std::size_t>(P));
    for (int i = 0; i < P; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    pack.order.assign(idx.begin(), idx.begin() + C);
    pack.codes.resize(static_cast<std::size_t>(C) * pack.plane_size());
    for (auto& c : pack.codes) c = static_cast<std::uint8_t>(rng.below(1u << pack.n_bits));
    for (int i = 0; i < C; ++i) {
        if (rng.below(13) == 0) {
            const half_bits v = float_to_half_floor(static_cast<float>(rng.uniform(-4.0, 4.0)));
            pack.side_info.emplace_back(v, v); // degenerate per-channel range
            std::fill(pack.channel_codes(i), pack.channel_codes(i) + pack.plane_size(), std::uint8_t{0});
        } else {
            double a = rng.uniform(-10.0, 10.0), b = rng.uniform(-10.0, 10.0);
            if (a > b) std::swap(a, b);
            pack.side_info.push_back(round_f16_directed(static_cast<float>(a), static_cast<float>(b + 1e-2)));
        }
    }
    pack.validate();
    return pack;
}

std::string c2_bitstream_roundtrip() {
    DetRng rng(202);
    long long fuzzed = 0;
    const int n_packs = 1000;
    for (int t = 0; t < n_packs; ++t) {
        QuantizedPack pack = random_pack(rng, 5, 9);

        TiledImage img = tile(pack);
        require(untile(img, pack.channel_h, pack.channel_w, pack.C()) == pack.codes,
                fmt("pack %d: tile/untile is not bit-exact", t));

        for (CodecId codec : {CodecId::raw, CodecId::med_range}) {
            Bitstream bs = encode(pack, codec);
            QuantizedPack back = decode(bs.bytes);
            require(packs_equal(back, pack), fmt("pack %d: %s round-trip mismatch", t, codec_name(codec)));

            if (t % 5 == 0) {
                auto corrupt = bs.bytes;
                for (int k = 0; k < 3; ++k)
                    corrupt[rng.below(corrupt.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
                if (corrupt != bs.bytes) {
                    bool threw = false;
                    try {
                        decode(corrupt);
                    } catch (const Error&) {
                        threw = true;
                    }
                    require(threw, fmt("pack %d: corrupted %s stream decoded silently", t, codec_name(codec)));
                    ++fuzzed;
                }
                auto trunc = bs.bytes;
                trunc.resize(rng.below(trunc.size()));
                bool threw = false;
                try {
                    decode(trunc);
                } catch (const Error&) {
                    threw = true;
                }
                require(threw, fmt("pack %d: truncated %s stream decoded silently", t, codec_name(codec)));
                ++fuzzed;
            }
        }
    }
    return fmt("%d packs round-tripped bit-exactly on both codecs, %lld fuzzed streams all rejected", n_packs,
               fuzzed);
}

// ---- 3. channel selection vs brute force ------------------------------------

std::string c3_selection_oracle() {
    DetRng rng(303);
    for (int trial = 0; trial < 100; ++trial) {
        CorrelationMatrix m;
        m.P = 2 + static_cast<int>(rng.below(7));
        m.Q = 1 + static_cast<int>(rng.below(6));
        m.sample_count = 1;
        m.rho.resize(static_cast<std::size_t>(m.P) * m.Q);
        for (auto& r : m.rho) r = rng.uniform();

        int max_k = 0;
        while ((2 << max_k) <= m.P) ++max_k;
        const int C = 1 << rng.below(static_cast<std::uint64_t>(max_k) + 1);

        ChannelSelection sel = select_channels(m, C);

        std::vector<double> score(static_cast<std::size_t>(m.P), 0.0);
        for (int p = 0; p < m.P; ++p)
            for (int q = 0; q < m.Q; ++q) score[static_cast<std::size_t>(p)] += m.at(p, q);

        double best = -1.0;
        for (unsigned mask = 0; mask < (1u << m.P); ++mask) {
            if (__builtin_popcount(mask) != C) continue;
            double s = 0.0;
            for (int p = 0; p < m.P; ++p)
                if (mask & (1u << p)) s += score[static_cast<std::size_t>(p)];
            best = std::max(best, s);
        }
        double got = 0.0;
        for (int p : sel.order) got += score[static_cast<std::size_t>(p)];
        require(std::abs(got - best) <= 1e-9,
                fmt("trial %d: selected subset scores %.12f, brute-force best %.12f", trial, got, best));

        for (std::size_t i = 1; i < sel.order.size(); ++i) {
            const double a = score[static_cast<std::size_t>(sel.order[i - 1])];
            const double b = score[static_cast<std::size_t>(sel.order[i])];
            require(a > b || (a == b && sel.order[i - 1] < sel.order[i]),
                    fmt("trial %d: selection order violates score-then-index ranking", trial));
        }
    }
    return "100 random matrices (P <= 8): selection matches the exhaustive subset oracle";
}

// ---- 4. consolidation properties ---------------------------------------------

std::string c4_consolidation() {
    DetRng rng(404);
    const int tuples = 10000;
    for (int t = 0; t < tuples; ++t) {
        const int n = 2 + static_cast<int>(rng.below(7));
        double a = rng.uniform(-20.0, 20.0), b = rng.uniform(-20.0, 20.0);
        if (a > b) std::swap(a, b);
        const auto [mb, Mb] = round_f16_directed(static_cast<float>(a), static_cast<float>(b + 1e-2));
        const double lo = half_to_float(mb), hi = half_to_float(Mb);
        const double step = (hi - lo) / static_cast<double>((1 << n) - 1);
        const std::uint8_t code = static_cast<std::uint8_t>(rng.below(1u << n));
        const double bin_lo = lo + (static_cast<double>(code) - 0.5) * step;
        const double bin_hi = lo + (static_cast<double>(code) + 0.5) * step;

        const double z0 = rng.uniform(lo - (hi - lo), hi + (hi - lo));
        double z = z0;
        consolidate_channel(&code, 1, 1, mb, Mb, n, &z);
        require(z >= bin_lo && z <= bin_hi, fmt("tuple %d: output %.9g outside closed bin [%.9g, %.9g]", t, z, bin_lo,
                                                bin_hi));

        double z2 = z;
        consolidate_channel(&code, 1, 1, mb, Mb, n, &z2);
        require(z2 == z, fmt("tuple %d: consolidation is not idempotent", t));

        for (int s = 0; s < 50; ++s) {
            const double v = bin_lo + rng.uniform() * (bin_hi - bin_lo);
            require(std::abs(z - z0) <= std::abs(v - z0) + 1e-12,
                    fmt("tuple %d: sampled in-bin value deviates less than the output", t));
        }
    }
    return fmt("%d tuples: in-bin, idempotent, minimal deviation against 50 sampled alternatives each", tuples);
}

// ---- 5. gradient check --------------------------------------------------------

BafModel<float> small_baf_model(std::uint64_t seed, int C, int Q, int P, int hidden, int n_bits) {
    DetRng rng(seed);
    ConvLayer<float> frozen;
    frozen.in_channels = Q;
    frozen.out_channels = P;
    frozen.kernel_size = 3;
    frozen.stride = 2;
    frozen.weights.resize(static_cast<std::size_t>(P) * Q * 9);
    for (auto& w : frozen.weights) w = rng.uniform_f(-0.5f, 0.5f);
    frozen.bias.resize(static_cast<std::size_t>(P));
    for (auto& b : frozen.bias) b = rng.uniform_f(-0.2f, 0.2f);
    BnAffine<float> bn;
    bn.scale.resize(static_cast<std::size_t>(P));
    bn.bias.resize(static_cast<std::size_t>(P));
    for (auto& s : bn.scale) s = (rng.below(2) ? 1.0f : -1.0f) * rng.uniform_f(0.5f, 1.5f);
    for (auto& b : bn.bias) b = rng.uniform_f(-0.5f, 0.5f);
    std::vector<int> idx(static_cast<std::size_t>(P));
    for (int i = 0; i < P; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    return init_baf_model(hidden, std::vector<int>(idx.begin(), idx.begin() + C), frozen, bn, n_bits, seed + 1);
}

std::string c5_gradcheck() {
    BafModel<double> m = small_baf_model(501, 2, 3, 4, 3, 8).cast<double>();
    DetRng rng(502);
    Tensor<double> zc(2, 4, 4), y(4, 4, 4);
    for (std::size_t i = 0; i < zc.size(); ++i) zc.data()[i] = rng.uniform(-1.5, 1.5);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1.0, 1.0);
    const ActivationFn sigma{Activation::leaky_relu, 0.1f};
    const double eps = 1e-3;

    BafGrads<double> grads;
    baf_backward(m, zc, y, sigma, eps, grads);

    auto eval = [&](const BafModel<double>& model) {
        return charbonnier_loss(y, baf_forward(zc, model).z_tilde, sigma, eps);
    };
    std::vector<std::vector<double>*> params = {&m.conv1.weights, &m.conv1.bias, &m.alpha1,
                                                &m.conv2.weights, &m.conv2.bias, &m.alpha2,
                                                &m.conv3.weights, &m.conv3.bias, &m.alpha3,
                                                &m.conv4.weights, &m.conv4.bias};
    std::vector<const std::vector<double>*> analytic = {&grads.conv1_w, &grads.conv1_b, &grads.alpha1,
                                                        &grads.conv2_w, &grads.conv2_b, &grads.alpha2,
                                                        &grads.conv3_w, &grads.conv3_b, &grads.alpha3,
                                                        &grads.conv4_w, &grads.conv4_b};
    const double h = 1e-5;
    double max_rel = 0.0;
    long long count = 0;
    for (std::size_t s = 0; s < params.size(); ++s) {
        for (std::size_t i = 0; i < params[s]->size(); ++i) {
            const double saved = (*params[s])[i];
            (*params[s])[i] = saved + h;
            const double lp = eval(m);
            (*params[s])[i] = saved - h;
            const double lm = eval(m);
            (*params[s])[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double a = (*analytic[s])[i];
            const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            max_rel = std::max(max_rel, rel);
            ++count;
            if (rel > 1e-4)
                throw Failure(fmt("parameter group %zu index %zu: analytic %.9g vs FD %.9g (rel %.3g)", s, i, a, fd,
                                  rel));
        }
    }
    return fmt("%lld parameters on a C=2,Q=3,P=4 4x4 instance, max relative error %.3g", count, max_rel);
}

// ---- 6. single-pair overfit ----------------------------------------------------

std::string c6_overfit() {
    BafModel<float> init = small_baf_model(601, 2, 3, 4, 3, 8);
    const ActivationFn sigma{Activation::leaky_relu, 0.1f};

    // A realistic pair: the target is what the frozen head actually produces
    // for some source, so a zero-residual fit exists.
    DetRng rng(602);
    Tensor<float> u(init.Q(), 8, 8);
    for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Tensor<float> z = bn_forward(conv2d(u, init.frozen_conv), init.frozen_bn);
    Tensor<float> y(z.channels(), z.height(), z.width());
    for (std::size_t i = 0; i < z.size(); ++i) y.data()[i] = sigma(z.data()[i]);
    Tensor<float> zc(init.C(), z.height(), z.width());
    for (int c = 0; c < init.C(); ++c)
        for (int yy = 0; yy < z.height(); ++yy)
            for (int xx = 0; xx < z.width(); ++xx)
                zc.at(c, yy, xx) = z.at(init.order[static_cast<std::size_t>(c)], yy, xx);

    std::vector<std::pair<Tensor<float>, Tensor<float>>> data;
    data.emplace_back(zc, y);
    const double L0 = charbonnier_loss(y, baf_forward(zc, init).z_tilde, sigma, 1e-3);

    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.batch = 1;
    cfg.iterations = 400;
    cfg.eval_interval = 25;
    cfg.seed = 603;
    BafModel<float> best = train_baf(data, init, sigma, cfg);
    const double L1 = charbonnier_loss(y, baf_forward(zc, best).z_tilde, sigma, 1e-3);

    require(L1 * 10.0 <= L0, fmt("loss only fell from %.6f to %.6f (%.2fx) in %d iterations", L0, L1,
                                 L1 > 0 ? L0 / L1 : 0.0, cfg.iterations));
    return fmt("loss %.4f -> %.4f (%.1fx reduction) within %d iterations", L0, L1, L0 / L1, cfg.iterations);
}

// ---- shared end-to-end fixture -------------------------------------------------

struct SharedEnv {
    Dataset data;
    SurrogateNet net;
    ChannelSelection sel; // full P-channel ranking
    double base_accuracy = 0.0;
};

const SharedEnv& shared_env() {
    static const SharedEnv env = [] {
        SharedEnv e;
        e.data = gen_synthetic_dataset(7001, 1000, 4); // val 200 / train 800
        SurrogateTrainConfig cfg;                      // Q=16, P=32 defaults
        e.net = train_surrogate(e.data, 7002, cfg);

        std::vector<Tensor<float>> stat_images;
        for (std::size_t i = 0; i < 64 && i < e.data.train_idx.size(); ++i)
            stat_images.push_back(e.data.items[e.data.train_idx[i]].image);
        CorrelationMatrix stats = accumulate_stats(e.net.front, stat_images);
        e.sel = select_channels(stats, e.net.P());
        e.base_accuracy = evaluate_accuracy(e.net, e.data, e.data.val_idx);
        return e;
    }();
    return env;
}

struct EvalResult {
    double accuracy = 0.0;
    double baf_err = 0.0;  // mean |z_tilde - z| per element, consolidated BaF restoration
    double zero_err = 0.0; // same for the zero-fill baseline
};

EvalResult eval_config(const SharedEnv& e, const BafModel<float>& baf) {
    EvalResult r;
    std::size_t n_ok = 0, n_el = 0;
    double baf_sum = 0.0, zero_sum = 0.0;
    for (std::size_t idx : e.data.val_idx) {
        const LabeledImage& item = e.data.items[idx];
        Bitstream bs = pipeline_encode(item.image, e.net, baf.order, baf.n_bits, CodecId::raw);
        DecodeResult dec = pipeline_decode(bs.bytes, e.net, baf);
        n_ok += dec.prediction == item.label ? 1 : 0;

        Tensor<float> x = e.net.front.forward_x(item.image);
        Tensor<float> z = e.net.front.forward_z_from_x(x);
        Tensor<float> zero = zero_fill_restore(decode(bs.bytes), e.net);
        for (std::size_t i = 0; i < z.size(); ++i) {
            baf_sum += std::abs(static_cast<double>(dec.z_tilde.data()[i]) - static_cast<double>(z.data()[i]));
            zero_sum += std::abs(static_cast<double>(zero.data()[i]) - static_cast<double>(z.data()[i]));
        }
        n_el += z.size();
    }
    r.accuracy = static_cast<double>(n_ok) / static_cast<double>(e.data.val_idx.size());
    r.baf_err = baf_sum / static_cast<double>(n_el);
    r.zero_err = zero_sum / static_cast<double>(n_el);
    return r;
}

BafModel<float> train_one_baf(const SharedEnv& e, int C, int n_bits, int iterations, std::uint64_t seed) {
    std::vector<int> order(e.sel.order.begin(), e.sel.order.begin() + C);
    auto pairs = make_baf_dataset(e.net, e.data, e.data.train_idx, order, n_bits);
    BafModel<float> init = init_baf_model(e.net.Q(), order, e.net.front.split_conv, e.net.front.split_bn, n_bits, seed);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch = 8;
    cfg.iterations = iterations;
    cfg.holdout_fraction = 0.05;
    cfg.eval_interval = 25;
    cfg.seed = seed + 1;
    return train_baf(pairs, init, e.net.act, cfg);
}

// ---- 7. scaled end-to-end -------------------------------------------------------

std::string c7_end_to_end() {
    const SharedEnv& e = shared_env();
    const int P = e.net.P();

    BafModel<float> baf_full = train_one_baf(e, P, 8, 250, 701);
    EvalResult full = eval_config(e, baf_full);
    require(full.accuracy >= e.base_accuracy - 0.005 - 1e-12,
            fmt("C=P accuracy %.4f more than 0.5 points below baseline %.4f", full.accuracy, e.base_accuracy));

    BafModel<float> baf_quarter = train_one_baf(e, P / 4, 8, 250, 702);
    EvalResult quarter = eval_config(e, baf_quarter);
    require(quarter.accuracy >= e.base_accuracy - 0.02 - 1e-12,
            fmt("C=P/4 accuracy %.4f more than 2 points below baseline %.4f", quarter.accuracy, e.base_accuracy));
    require(quarter.baf_err * 2.0 <= quarter.zero_err,
            fmt("C=P/4 restoration err %.6f not 2x better than zero-fill %.6f", quarter.baf_err, quarter.zero_err));

    return fmt("baseline %.4f | C=%d: %.4f | C=%d: %.4f, restore %.4f vs zero-fill %.4f (%.1fx)", e.base_accuracy, P,
               full.accuracy, P / 4, quarter.accuracy, quarter.baf_err, quarter.zero_err,
               quarter.zero_err / quarter.baf_err);
}

// ---- 8. rate monotonicity ---------------------------------------------------------

std::string c8_rate_monotonicity() {
    const SharedEnv& e = shared_env();

    // Bit statistics depend only on the encoder, so the sweep models can be
    // lightly trained stubs; what matters is one per (C, n) configuration.
    Dataset small = e.data;
    small.train_idx.resize(8);
    small.val_idx.resize(40);
    TrainConfig tc;
    tc.iterations = 2;
    tc.batch = 2;
    tc.seed = 801;
    SweepConfig sc; // default axes: C in {4,8,16,32}, n in {2,4,6,8}, both codecs
    BafModelSet models = train_sweep_models(e.net, small, e.sel, sc.Cs, sc.ns, tc, 8);

    std::vector<SweepRow> rows = sweep(e.net, models, sc, small);
    const std::string csv = sweep_to_csv(rows);

    auto bits_at = [&](int C, int n, CodecId codec) {
        for (const SweepRow& r : rows)
            if (r.C == C && r.n == n && r.codec == codec) return r.bits_mean;
        throw Failure(fmt("missing sweep row C=%d n=%d", C, n));
    };
    for (CodecId codec : sc.codecs) {
        for (int C : sc.Cs)
            for (std::size_t i = 1; i < sc.ns.size(); ++i)
                require(bits_at(C, sc.ns[i - 1], codec) < bits_at(C, sc.ns[i], codec),
                        fmt("%s bits not strictly increasing in n at C=%d", codec_name(codec), C));
        for (int n : sc.ns)
            for (std::size_t i = 1; i < sc.Cs.size(); ++i)
                require(bits_at(sc.Cs[i - 1], n, codec) < bits_at(sc.Cs[i], n, codec),
                        fmt("%s bits not strictly increasing in C at n=%d", codec_name(codec), n));
    }

    std::vector<SweepRow> again = sweep(e.net, models, sc, small);
    require(sweep_to_csv(again) == csv, "sweep CSV is not bit-identical across runs with a fixed seed");

    return fmt("%zu rows over C={4,8,16,32} x n={2,4,6,8} x 2 codecs: bits strictly monotone, CSV reproducible",
               rows.size());
}

// ---- 9. compression effectiveness ----------------------------------------------

std::string c9_compression() {
    DetRng rng(909);
    long long raw_total = 0, med_total = 0;
    int per_tile_wins = 0;
    const int tiles = 1000;
    for (int t = 0; t < tiles; ++t) {
        const int C = 1 << rng.below(4);
        const int h = 16 + static_cast<int>(rng.below(17));
        const int w = 16 + static_cast<int>(rng.below(17));
        const int n = 2 + static_cast<int>(rng.below(7));

        // Smooth content: a few low-frequency sinusoid products per channel.
        Tensor<float> z(C, h, w);
        for (int c = 0; c < C; ++c) {
            double fy[3], fx[3], ph[3], amp[3];
            for (int k = 0; k < 3; ++k) {
                fy[k] = rng.uniform(0.25, 1.0);
                fx[k] = rng.uniform(0.25, 1.0);
                ph[k] = rng.uniform(0.0, 6.28318530717958648);
                amp[k] = rng.uniform(0.3, 1.0);
            }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double v = 0.0;
                    for (int k = 0; k < 3; ++k)
                        v += amp[k] * std::sin(6.28318530717958648 * (fy[k] * y / h + fx[k] * x / w) + ph[k]);
                    z.at(c, y, x) = static_cast<float>(v);
                }
        }
        std::vector<int> order(static_cast<std::size_t>(C));
        for (int i = 0; i < C; ++i) order[static_cast<std::size_t>(i)] = i;
        QuantizedPack pack = quantize_selected(z, order, n);

        const long long raw = encode(pack, CodecId::raw).total_bits();
        const long long med = encode(pack, CodecId::med_range).total_bits();
        raw_total += raw;
        med_total += med;
        if (static_cast<double>(med) <= 0.9 * static_cast<double>(raw)) ++per_tile_wins;
    }
    const double ratio = static_cast<double>(med_total) / static_cast<double>(raw_total);
    require(ratio <= 0.9, fmt("med_range/raw bit ratio %.4f exceeds 0.9 over %d smooth tiles", ratio, tiles));
    return fmt("%d smooth tiles: med_range/raw = %.4f total bits, %d/%d tiles individually under 0.9x", tiles, ratio,
               per_tile_wins, tiles);
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<std::string()> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "quantizer round-trip", 10.0, c1_quantizer_roundtrip},
        {2, "bitstream round-trip and fuzz", 30.0, c2_bitstream_roundtrip},
        {3, "channel selection vs brute force", 5.0, c3_selection_oracle},
        {4, "consolidation properties", 5.0, c4_consolidation},
        {5, "gradient check", 60.0, c5_gradcheck},
        {6, "single-pair overfit", 60.0, c6_overfit},
        {7, "scaled end-to-end accuracy", 900.0, c7_end_to_end},
        {8, "rate monotonicity and CSV reproducibility", 300.0, c8_rate_monotonicity},
        {9, "compression effectiveness on smooth tiles", 30.0, c9_compression},
    };

    int passed = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = c.run();
        } catch (const std::exception& ex) {
            ok = false;
            detail = ex.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (ok && secs > c.budget_s) {
            ok = false;
            detail = fmt("passed checks but exceeded the %.0f s budget", c.budget_s);
        }
        std::printf("[%s] %d. %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str(), secs);
        std::fflush(stdout);
        if (ok) ++passed;
    }
    std::printf("acceptance: %d/%zu criteria passed\n", passed, criteria.size());
    return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
