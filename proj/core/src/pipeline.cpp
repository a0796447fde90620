#include "bafc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bafc/errors.hpp"
#include "bafc/util.hpp"

namespace bafc {

Bitstream pipeline_encode(const Tensor<float>& image, const SurrogateNet& net, const std::vector<int>& order,
                          int n_bits, CodecId codec) {
    net.validate();
    Tensor<float> x = net.front.forward_x(image);
    Tensor<float> z = net.front.forward_z_from_x(x);
    QuantizedPack pack = quantize_selected(z, order, n_bits);
    return encode(pack, codec);
}

DecodeResult pipeline_decode(const std::vector<std::uint8_t>& stream, const SurrogateNet& net,
                             const BafModel<float>& baf) {
    net.validate();
    baf.validate();
    QuantizedPack pack = decode(stream);
    if (pack.n_bits != baf.n_bits)
        throw ConfigError("pipeline_decode: stream quantizer depth n=" + std::to_string(pack.n_bits) +
                          " does not match model n=" + std::to_string(baf.n_bits));
    if (pack.order != baf.order) throw ConfigError("pipeline_decode: stream channel selection does not match model");
    if (frozen_weights_hash(baf.frozen_conv, baf.frozen_bn) !=
        frozen_weights_hash(net.front.split_conv, net.front.split_bn))
        throw ConfigError("pipeline_decode: model's frozen split-layer weights do not match the network");

    Tensor<float> zc_hat = dequantize_pack<float>(pack);
    BafForwardResult<float> fwd = baf_forward(zc_hat, baf);
    consolidate(fwd.z_tilde, pack);
    DecodeResult out;
    out.prediction = net.predict_from_z(fwd.z_tilde);
    out.z_tilde = std::move(fwd.z_tilde);
    return out;
}

Tensor<float> zero_fill_restore(const QuantizedPack& pack, const SurrogateNet& net) {
    pack.validate();
    const int P = net.P();
    Tensor<float> z(P, pack.channel_h, pack.channel_w);
    for (int p = 0; p < P; ++p) {
        const float b = net.front.split_bn.bias[static_cast<std::size_t>(p)];
        float* dst = z.channel_ptr(p);
        std::fill(dst, dst + z.plane_size(), b);
    }
    Tensor<float> sel = dequantize_pack<float>(pack);
    for (int i = 0; i < pack.C(); ++i) {
        const int p = pack.order[static_cast<std::size_t>(i)];
        if (p < 0 || p >= P) throw ShapeError("zero_fill_restore: selection index outside [0, P)");
        const float* src = sel.channel_ptr(i);
        std::copy(src, src + sel.plane_size(), z.channel_ptr(p));
    }
    return z;
}

std::vector<std::pair<Tensor<float>, Tensor<float>>> make_baf_dataset(const SurrogateNet& net, const Dataset& data,
                                                                      const std::vector<std::size_t>& subset,
                                                                      const std::vector<int>& order, int n_bits) {
    net.validate();
    if (subset.empty()) throw DataError("make_baf_dataset: empty subset");
    std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
    pairs.reserve(subset.size());
    for (std::size_t idx : subset) {
        Tensor<float> x = net.front.forward_x(data.items[idx].image);
        Tensor<float> z = net.front.forward_z_from_x(x);
        QuantizedPack pack = quantize_selected(z, order, n_bits);
        pairs.emplace_back(dequantize_pack<float>(pack), activation(z, net.act));
    }
    return pairs;
}

BafModelSet train_sweep_models(const SurrogateNet& net, const Dataset& data, const ChannelSelection& sel,
                               const std::vector<int>& Cs, const std::vector<int>& ns, const TrainConfig& cfg,
                               int hidden) {
    net.validate();
    BafModelSet models;
    for (int C : Cs) {
        if (C > sel.C()) throw ConfigError("train_sweep_models: C exceeds the selection size");
        std::vector<int> order(sel.order.begin(), sel.order.begin() + C);
        for (int n : ns) {
            TrainConfig per = cfg;
            // decorrelate per-model streams while keeping the set reproducible
            per.seed = cfg.seed ^ (static_cast<std::uint64_t>(C) << 32) ^ static_cast<std::uint64_t>(n);
            auto pairs = make_baf_dataset(net, data, data.train_idx, order, n);
            BafModel<float> init =
                init_baf_model(hidden, order, net.front.split_conv, net.front.split_bn, n, per.seed);
            models.emplace(std::make_pair(C, n), train_baf(pairs, init, net.act, per));
        }
    }
    return models;
}

std::vector<SweepRow> sweep(const SurrogateNet& net, const BafModelSet& models, const SweepConfig& cfg,
                            const Dataset& data) {
    net.validate();
    if (cfg.Cs.empty() || cfg.ns.empty() || cfg.codecs.empty()) throw ConfigError("sweep: empty axis");
    const std::vector<std::size_t>& eval_set = data.val_idx.empty() ? data.train_idx : data.val_idx;
    if (eval_set.empty()) throw DataError("sweep: empty evaluation set");

    std::vector<SweepRow> rows;
    for (int C : cfg.Cs) {
        for (int n : cfg.ns) {
            auto it = models.find({C, n});
            if (it == models.end())
                throw ConfigError("sweep: no model for C=" + std::to_string(C) + ", n=" + std::to_string(n));
            const BafModel<float>& baf = it->second;
            if (baf.C() != C || baf.n_bits != n) throw ConfigError("sweep: model keyed under wrong configuration");

            struct PerImage {
                std::vector<long long> bits; // one per codec
                bool correct = false;
                double abs_err_sum = 0.0;
                std::size_t count = 0;
            };
            std::vector<PerImage> results(eval_set.size());
            parallel_for_indexed(eval_set.size(), cfg.threads, [&](std::size_t i) {
                const LabeledImage& item = data.items[eval_set[i]];
                Tensor<float> x = net.front.forward_x(item.image);
                Tensor<float> z = net.front.forward_z_from_x(x);
                QuantizedPack pack = quantize_selected(z, baf.order, n);
                PerImage& r = results[i];
                r.bits.reserve(cfg.codecs.size());
                for (CodecId codec : cfg.codecs) r.bits.push_back(encode(pack, codec).total_bits());
                Tensor<float> zc_hat = dequantize_pack<float>(pack);
                BafForwardResult<float> fwd = baf_forward(zc_hat, baf);
                consolidate(fwd.z_tilde, pack);
                r.correct = net.predict_from_z(fwd.z_tilde) == item.label;
                for (std::size_t e = 0; e < z.size(); ++e)
                    r.abs_err_sum += std::fabs(static_cast<double>(fwd.z_tilde.data()[e]) -
                                               static_cast<double>(z.data()[e]));
                r.count = z.size();
            });

            for (std::size_t ci = 0; ci < cfg.codecs.size(); ++ci) {
                SweepRow row;
                row.C = C;
                row.n = n;
                row.codec = cfg.codecs[ci];
                double bits = 0.0, err = 0.0;
                std::size_t n_ok = 0, n_el = 0;
                for (const PerImage& r : results) {
                    bits += static_cast<double>(r.bits[ci]);
                    err += r.abs_err_sum;
                    n_el += r.count;
                    n_ok += r.correct ? 1 : 0;
                }
                row.bits_mean = bits / static_cast<double>(eval_set.size());
                row.accuracy = static_cast<double>(n_ok) / static_cast<double>(eval_set.size());
                row.restore_err = err / static_cast<double>(n_el);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "C,n,codec,bits_mean,accuracy,restore_err\n";
    char buf[160];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.3f,%.6f,%.9f\n", r.C, r.n, codec_name(r.codec), r.bits_mean,
                      r.accuracy, r.restore_err);
        out += buf;
    }
    return out;
}

Tensor<float> read_image_any(const std::string& path) {
    auto ends_with = [&](const char* suffix) {
        const std::size_t n = std::char_traits<char>::length(suffix);
        return path.size() >= n && path.compare(path.size() - n, n, suffix) == 0;
    };
    if (ends_with(".ften")) return read_ften(path);
    if (ends_with(".pgm")) {
        auto bytes = read_file_bytes(path);
        // minimal P5 reader: header tokens then one whitespace byte of raster
        std::size_t pos = 0;
        auto token = [&]() {
            auto is_space = [](std::uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
            while (pos < bytes.size() && (is_space(bytes[pos]) || bytes[pos] == '#'))
                if (bytes[pos] == '#')
                    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                else
                    ++pos;
            std::size_t start = pos;
            while (pos < bytes.size() && !is_space(bytes[pos])) ++pos;
            if (start == pos) throw DataError("graymap: truncated header: " + path);
            return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos));
        };
        if (token() != "P5") throw DataError("graymap: not a binary P5 graymap: " + path);
        auto int_token = [&]() {
            const std::string t = token();
            try {
                std::size_t used = 0;
                int v = std::stoi(t, &used);
                if (used != t.size()) throw std::invalid_argument(t);
                return v;
            } catch (const std::exception&) {
                throw DataError("graymap: bad header value '" + t + "': " + path);
            }
        };
        const int w = int_token();
        const int h = int_token();
        const int maxval = int_token();
        if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw DataError("graymap: bad dimensions: " + path);
        ++pos;
        if (bytes.size() - pos != static_cast<std::size_t>(w) * h)
            throw DataError("graymap: raster size mismatch: " + path);
        Tensor<float> img(1, h, w);
        for (std::size_t i = 0; i < img.size(); ++i)
            img.data()[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
        return img;
    }
    throw DataError("unsupported image format (expected .ften or .pgm): " + path);
}

} // namespace bafc
