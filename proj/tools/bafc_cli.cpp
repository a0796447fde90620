#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "bafc/config.hpp"
#include "bafc/errors.hpp"
#include "bafc/pipeline.hpp"
#include "bafc/util.hpp"

namespace fs = std::filesystem;
using namespace bafc;

namespace {

// every key a --config file may carry, across all subcommands
const std::vector<std::string> kConfigKeys = {
    "count",      "classes",         "surrogate_lr", "surrogate_batch", "surrogate_iterations",
    "q_channels", "p_channels",      "back_width",   "target_accuracy", "lr",
    "batch",      "iterations",      "epsilon",      "holdout_fraction", "eval_interval",
    "hidden",     "Cs",              "ns",           "codecs",
};

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::string config_path;
    int precision = 32;
    int threads = 1;
    KvConfig cfg;

    void load() {
        if (!config_path.empty()) cfg = KvConfig::load(config_path, kConfigKeys);
    }
};

Dataset make_dataset(const GlobalOpts& g, int count, int classes) {
    return gen_synthetic_dataset(g.seed, count, classes);
}

SurrogateTrainConfig surrogate_config(const GlobalOpts& g) {
    SurrogateTrainConfig cfg;
    cfg.Q = g.cfg.get_int("q_channels", cfg.Q);
    cfg.P = g.cfg.get_int("p_channels", cfg.P);
    cfg.back_width = g.cfg.get_int("back_width", cfg.back_width);
    cfg.lr = g.cfg.get_double("surrogate_lr", cfg.lr);
    cfg.batch = g.cfg.get_int("surrogate_batch", cfg.batch);
    cfg.iterations = g.cfg.get_int("surrogate_iterations", cfg.iterations);
    cfg.target_accuracy = g.cfg.get_double("target_accuracy", cfg.target_accuracy);
    return cfg;
}

TrainConfig baf_config(const GlobalOpts& g) {
    TrainConfig cfg;
    cfg.seed = g.seed;
    cfg.lr = g.cfg.get_double("lr", cfg.lr);
    cfg.batch = g.cfg.get_int("batch", cfg.batch);
    cfg.iterations = g.cfg.get_int("iterations", cfg.iterations);
    cfg.epsilon = g.cfg.get_double("epsilon", cfg.epsilon);
    cfg.holdout_fraction = g.cfg.get_double("holdout_fraction", cfg.holdout_fraction);
    cfg.eval_interval = g.cfg.get_int("eval_interval", cfg.eval_interval);
    return cfg;
}

std::vector<int> selection_prefix(const SelectionFile& sel, int C) {
    if (C < 1 || C > sel.selection.C())
        throw ConfigError("C=" + std::to_string(C) + " outside the selection file's range (holds " +
                          std::to_string(sel.selection.C()) + " channels)");
    if (!is_power_of_two(C)) throw ConfigError("C must be a power of two");
    return std::vector<int>(sel.selection.order.begin(), sel.selection.order.begin() + C);
}

// deterministic file listing for stats over a user-supplied image directory
std::vector<Tensor<float>> load_image_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string p = entry.path().string();
        if (p.size() > 5 && (p.compare(p.size() - 5, 5, ".ften") == 0 ||
                             p.compare(p.size() - 4, 4, ".pgm") == 0))
            paths.push_back(p);
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError("no .ften or .pgm images in directory: " + dir);
    std::vector<Tensor<float>> images;
    images.reserve(paths.size());
    for (const auto& p : paths) images.push_back(read_image_any(p));
    return images;
}

int run_stats(const GlobalOpts& g, const std::string& net_path, const std::string& images_dir, int count, int classes,
              int C, const std::string& out_path) {
    SurrogateNet net = read_surrogate(net_path);
    std::vector<Tensor<float>> images;
    if (!images_dir.empty()) {
        images = load_image_dir(images_dir);
    } else {
        Dataset data = make_dataset(g, count, classes);
        images.reserve(data.items.size());
        for (auto& item : data.items) images.push_back(std::move(item.image));
    }
    CorrelationMatrix stats = accumulate_stats(net.front, images, g.threads);
    const int sel_C = C > 0 ? C : stats.P;
    ChannelSelection sel = select_channels(stats, sel_C);
    write_selection_file(out_path, stats, sel);
    std::printf("analyzed %d images: P=%d, Q=%d; wrote top-%d selection to %s\n", stats.sample_count, stats.P,
                stats.Q, sel.C(), out_path.c_str());
    return 0;
}

int run_train_surrogate(const GlobalOpts& g, int count, int classes, const std::string& out_path) {
    Dataset data = make_dataset(g, count, classes);
    SurrogateNet net = train_surrogate(data, g.seed, surrogate_config(g));
    write_surrogate(out_path, net);
    const double acc = evaluate_accuracy(net, data, data.val_idx.empty() ? data.train_idx : data.val_idx, g.threads);
    std::printf("trained surrogate: val accuracy %.4f; wrote %s\n", acc, out_path.c_str());
    return 0;
}

int run_train_baf(const GlobalOpts& g, const std::string& net_path, const std::string& sel_path, int C, int n,
                  int hidden, int count, int classes, const std::string& out_path) {
    SurrogateNet net = read_surrogate(net_path);
    SelectionFile sel = read_selection_file(sel_path);
    std::vector<int> order = selection_prefix(sel, C);
    Dataset data = make_dataset(g, count, classes);
    auto pairs = make_baf_dataset(net, data, data.train_idx, order, n);
    const int h = hidden > 0 ? hidden : g.cfg.get_int("hidden", net.Q());
    TrainConfig cfg = baf_config(g);
    BafModel<float> init = init_baf_model(h, order, net.front.split_conv, net.front.split_bn, n, g.seed);
    TrainReport report;
    BafModel<float> model;
    if (g.precision == 64) {
        auto pairs64 = std::vector<std::pair<Tensor<double>, Tensor<double>>>();
        pairs64.reserve(pairs.size());
        for (auto& pr : pairs) pairs64.emplace_back(pr.first.cast<double>(), pr.second.cast<double>());
        model = train_baf(pairs64, init.cast<double>(), net.act, cfg, &report).cast<float>();
    } else {
        model = train_baf(pairs, init, net.act, cfg, &report);
    }
    write_baf_model(out_path, model);
    std::printf("trained BaF model (C=%d, n=%d, hidden=%d): best loss %.6f at iteration %d; wrote %s\n", C, n, h,
                report.best_eval_loss, report.best_iteration, out_path.c_str());
    return 0;
}

int run_encode(const GlobalOpts& g, const std::string& net_path, const std::string& sel_path, int C, int n,
               const std::string& codec_name_str, const std::string& image_path, const std::string& out_path) {
    SurrogateNet net = read_surrogate(net_path);
    SelectionFile sel = read_selection_file(sel_path);
    std::vector<int> order = selection_prefix(sel, C);
    CodecId codec = codec_from_name(codec_name_str);
    Tensor<float> image = read_image_any(image_path);
    Bitstream bs = pipeline_encode(image, net, order, n, codec);
    write_file_bytes(out_path, bs.bytes);
    if (codec == CodecId::external) {
        // the tile itself travels out of band for an external image codec
        Tensor<float> x = net.front.forward_x(image);
        Tensor<float> z = net.front.forward_z_from_x(x);
        QuantizedPack pack = quantize_selected(z, order, n);
        PgmExport exp = export_tile_pgm(pack);
        write_file_bytes(out_path + ".pgm", exp.pgm);
        write_file_text(out_path + ".sidecar.txt", exp.sidecar);
        std::printf("external codec: tile graymap in %s.pgm, sidecar in %s.sidecar.txt\n", out_path.c_str(),
                    out_path.c_str());
    }
    std::printf("encoded %s: header=%lld side_info=%lld payload=%lld total=%lld bits; wrote %s\n", image_path.c_str(),
                bs.header_bits, bs.side_info_bits, bs.payload_bits, bs.total_bits(), out_path.c_str());
    return 0;
}

int run_decode(const GlobalOpts& g, const std::string& net_path, const std::string& baf_path,
               const std::string& in_path, const std::string& pgm_path, const std::string& sidecar_path,
               const std::string& dump_z_path) {
    SurrogateNet net = read_surrogate(net_path);
    BafModel<float> baf = read_baf_model(baf_path);
    DecodeResult result;
    if (!pgm_path.empty() || !sidecar_path.empty()) {
        if (pgm_path.empty() || sidecar_path.empty())
            throw ConfigError("external import needs both --pgm and --sidecar");
        QuantizedPack pack = import_tile_pgm(read_file_bytes(pgm_path), read_file_text(sidecar_path));
        // route the imported pack through the same integrity checks by
        // re-encoding it losslessly
        Bitstream bs = encode(pack, CodecId::raw);
        result = pipeline_decode(bs.bytes, net, baf);
    } else {
        result = pipeline_decode(read_file_bytes(in_path), net, baf);
    }
    if (!dump_z_path.empty()) write_ften(dump_z_path, result.z_tilde);
    (void)g;
    std::printf("prediction: %d\n", result.prediction);
    return 0;
}

int run_eval(const GlobalOpts& g, const std::string& net_path, const std::string& baf_path, int n_override, int count,
             int classes, const std::string& codec_name_str) {
    SurrogateNet net = read_surrogate(net_path);
    Dataset data = make_dataset(g, count, classes);
    const std::vector<std::size_t>& eval_set = data.val_idx.empty() ? data.train_idx : data.val_idx;
    if (baf_path.empty()) {
        const double acc = evaluate_accuracy(net, data, eval_set, g.threads);
        std::printf("uncompressed accuracy: %.6f over %zu images\n", acc, eval_set.size());
        return 0;
    }
    BafModel<float> baf = read_baf_model(baf_path);
    const int n = n_override > 0 ? n_override : baf.n_bits;
    SweepConfig cfg;
    cfg.Cs = {baf.C()};
    cfg.ns = {n};
    cfg.codecs = {codec_from_name(codec_name_str)};
    cfg.threads = g.threads;
    BafModelSet models;
    models.emplace(std::make_pair(baf.C(), n), std::move(baf));
    std::vector<SweepRow> rows = sweep(net, models, cfg, data);
    std::printf("C=%d n=%d codec=%s: bits_mean=%.1f accuracy=%.6f restore_err=%.9f over %zu images\n", rows[0].C,
                rows[0].n, codec_name(rows[0].codec), rows[0].bits_mean, rows[0].accuracy, rows[0].restore_err,
                eval_set.size());
    return 0;
}

int run_sweep(const GlobalOpts& g, const std::string& net_path, const std::string& sel_path, int count, int classes,
              int hidden, const std::string& out_path) {
    SurrogateNet net = read_surrogate(net_path);
    SelectionFile sel = read_selection_file(sel_path);
    Dataset data = make_dataset(g, count, classes);

    SweepConfig cfg;
    cfg.Cs = g.cfg.get_int_list("Cs", cfg.Cs);
    cfg.ns = g.cfg.get_int_list("ns", cfg.ns);
    std::vector<std::string> codec_names = g.cfg.get_string_list("codecs", {"raw", "med_range"});
    cfg.codecs.clear();
    for (const auto& name : codec_names) cfg.codecs.push_back(codec_from_name(name));
    cfg.threads = g.threads;

    TrainConfig train_cfg = baf_config(g);
    if (!g.cfg.has("iterations")) train_cfg.iterations = 60; // sweep trains many models; keep each short
    if (!g.cfg.has("batch")) train_cfg.batch = 4;
    const int h = hidden > 0 ? hidden : g.cfg.get_int("hidden", net.Q());

    BafModelSet models = train_sweep_models(net, data, sel.selection, cfg.Cs, cfg.ns, train_cfg, h);
    std::vector<SweepRow> rows = sweep(net, models, cfg, data);
    const std::string csv = sweep_to_csv(rows);
    write_file_text(out_path, csv);
    std::printf("%s", csv.c_str());
    std::printf("wrote %zu rows to %s\n", rows.size(), out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature-tensor compression pipeline for split inference"};
    app.require_subcommand(1);
    app.fallthrough(); // accept global options after the subcommand too

    GlobalOpts g;
    app.add_option("--seed", g.seed, "seed for data generation and training")->capture_default_str();
    app.add_option("--config", g.config_path, "key=value configuration file");
    app.add_option("--precision", g.precision, "arithmetic width for BaF training (32 or 64)")
        ->check(CLI::IsMember({32, 64}))
        ->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads for evaluation/stats")->check(CLI::PositiveNumber)
        ->capture_default_str();

    int count = 240, stats_count = 64, classes = 4, C = 0, n = 8, hidden = 0, eval_n = 0;
    std::string net_path, sel_path, images_dir, out_path, baf_path, image_path, in_path, pgm_path, sidecar_path,
        dump_z_path;
    std::string codec = "med_range";

    CLI::App* stats = app.add_subcommand("stats", "compute channel correlation statistics and a selection file");
    stats->add_option("--net", net_path, "SNET network file")->required();
    stats->add_option("--images", images_dir, "directory of .ften/.pgm images (default: synthetic set)");
    stats->add_option("--count", stats_count, "synthetic image count")->capture_default_str();
    stats->add_option("--classes", classes, "synthetic class count")->capture_default_str();
    stats->add_option("--C", C, "channels to keep in the selection (default: all, ranked)");
    stats->add_option("--out", out_path, "selection file to write")->required();

    CLI::App* tsur = app.add_subcommand("train-surrogate", "train the surrogate split classifier");
    tsur->add_option("--count", count, "synthetic image count")->capture_default_str();
    tsur->add_option("--classes", classes, "synthetic class count")->capture_default_str();
    tsur->add_option("--out", out_path, "SNET file to write")->required();

    CLI::App* tbaf = app.add_subcommand("train-baf", "train a restoration model for one (C, n) configuration");
    tbaf->add_option("--net", net_path, "SNET network file")->required();
    tbaf->add_option("--selection", sel_path, "selection file from 'stats'")->required();
    tbaf->add_option("--C", C, "transmitted channel count (power of two)")->required();
    tbaf->add_option("--n", n, "quantizer bits in [2, 8]")->capture_default_str();
    tbaf->add_option("--hidden", hidden, "hidden width (default: Q)");
    tbaf->add_option("--count", count, "synthetic image count")->capture_default_str();
    tbaf->add_option("--classes", classes, "synthetic class count")->capture_default_str();
    tbaf->add_option("--out", out_path, "BAFM file to write")->required();

    CLI::App* enc = app.add_subcommand("encode", "encode one image's split tensor to a bitstream");
    enc->add_option("--net", net_path, "SNET network file")->required();
    enc->add_option("--selection", sel_path, "selection file from 'stats'")->required();
    enc->add_option("--C", C, "transmitted channel count (power of two)")->required();
    enc->add_option("--n", n, "quantizer bits in [2, 8]")->capture_default_str();
    enc->add_option("--codec", codec, "raw, med_range, or external")->capture_default_str();
    enc->add_option("--image", image_path, "input image (.ften or .pgm)")->required();
    enc->add_option("--out", out_path, "bitstream file to write")->required();

    CLI::App* dec = app.add_subcommand("decode", "decode a bitstream and classify the restored tensor");
    dec->add_option("--net", net_path, "SNET network file")->required();
    dec->add_option("--baf", baf_path, "BAFM restoration model")->required();
    dec->add_option("--in", in_path, "bitstream file");
    dec->add_option("--pgm", pgm_path, "tile graymap from an external codec");
    dec->add_option("--sidecar", sidecar_path, "sidecar text for --pgm");
    dec->add_option("--dump-z", dump_z_path, "write the restored tensor as FTEN");

    CLI::App* eval = app.add_subcommand("eval", "measure accuracy (and restoration error with --baf)");
    eval->add_option("--net", net_path, "SNET network file")->required();
    eval->add_option("--baf", baf_path, "BAFM restoration model");
    eval->add_option("--n", eval_n, "quantizer bits (default: the model's)");
    eval->add_option("--codec", codec, "codec for bit accounting")->capture_default_str();
    eval->add_option("--count", count, "synthetic image count")->capture_default_str();
    eval->add_option("--classes", classes, "synthetic class count")->capture_default_str();

    CLI::App* swp = app.add_subcommand("sweep", "rate-accuracy sweep over (C, n, codec)");
    swp->add_option("--net", net_path, "SNET network file")->required();
    swp->add_option("--selection", sel_path, "selection file from 'stats'")->required();
    swp->add_option("--count", count, "synthetic image count")->capture_default_str();
    swp->add_option("--classes", classes, "synthetic class count")->capture_default_str();
    swp->add_option("--hidden", hidden, "hidden width (default: Q)");
    swp->add_option("--out", out_path, "CSV file to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        g.load();
        if (stats->parsed()) return run_stats(g, net_path, images_dir, stats_count, classes, C, out_path);
        if (tsur->parsed()) return run_train_surrogate(g, count, classes, out_path);
        if (tbaf->parsed()) return run_train_baf(g, net_path, sel_path, C, n, hidden, count, classes, out_path);
        if (enc->parsed()) return run_encode(g, net_path, sel_path, C, n, codec, image_path, out_path);
        if (dec->parsed()) {
            if (in_path.empty() && pgm_path.empty()) throw ConfigError("decode needs --in or --pgm/--sidecar");
            return run_decode(g, net_path, baf_path, in_path, pgm_path, sidecar_path, dump_z_path);
        }
        if (eval->parsed()) return run_eval(g, net_path, baf_path, eval_n, count, classes, codec);
        if (swp->parsed()) return run_sweep(g, net_path, sel_path, count, classes, hidden, out_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const Error& e) { // shape/data/corruption
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
