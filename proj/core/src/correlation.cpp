#include "bafc/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bafc/util.hpp"

namespace bafc {

namespace {

template <typename T>
double abs_corr_impl(std::span<const T> z, std::span<const T> x) {
    if (z.size() != x.size()) throw ShapeError("abs_corr: length mismatch");
    if (z.size() < 2) throw ShapeError("abs_corr: need at least 2 samples");
    const std::size_t n = z.size();
    double zm = 0.0, xm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        zm += static_cast<double>(z[i]);
        xm += static_cast<double>(x[i]);
    }
    zm /= static_cast<double>(n);
    xm /= static_cast<double>(n);
    double dot = 0.0, zz = 0.0, xx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dz = static_cast<double>(z[i]) - zm;
        const double dx = static_cast<double>(x[i]) - xm;
        dot += dz * dx;
        zz += dz * dz;
        xx += dx * dx;
    }
    if (zz == 0.0 || xx == 0.0) return 0.0; // constant channel carries no signal
    double r = std::fabs(dot) / (std::sqrt(zz) * std::sqrt(xx));
    return std::min(r, 1.0);
}

} // namespace

double abs_corr(std::span<const double> z, std::span<const double> x) { return abs_corr_impl(z, x); }
double abs_corr(std::span<const float> z, std::span<const float> x) { return abs_corr_impl(z, x); }

template <typename T>
double rho_pq(const T* z, int zh, int zw, const T* x, int xh, int xw) {
    if (xh != 2 * zh || xw != 2 * zw) throw ShapeError("rho_pq: x dims must be exactly 2x z dims");
    const std::size_t n = static_cast<std::size_t>(zh) * zw;
    std::vector<T> phase(n);
    double sum = 0.0;
    for (int s = 0; s < 4; ++s) {
        const int ry = s / 2, rx = s % 2;
        for (int y = 0; y < zh; ++y)
            for (int xx = 0; xx < zw; ++xx)
                phase[static_cast<std::size_t>(y) * zw + xx] =
                    x[static_cast<std::size_t>(2 * y + ry) * xw + (2 * xx + rx)];
        sum += abs_corr(std::span<const T>(z, n), std::span<const T>(phase.data(), n));
    }
    return sum / 4.0;
}

template double rho_pq<float>(const float*, int, int, const float*, int, int);
template double rho_pq<double>(const double*, int, int, const double*, int, int);

Tensor<float> SplitFront::forward_x(const Tensor<float>& image) const {
    Tensor<float> t = image;
    for (const Stage& st : pre) t = activation(bn_forward(conv2d(t, st.conv), st.bn), st.act);
    return t;
}

Tensor<float> SplitFront::forward_z_from_x(const Tensor<float>& x) const {
    return bn_forward(conv2d(x, split_conv), split_bn);
}

CorrelationMatrix accumulate_stats(const SplitFront& front, const std::vector<Tensor<float>>& images, int threads) {
    if (images.empty()) throw DataError("accumulate_stats: empty dataset");
    const int P = front.split_conv.out_channels;
    const int Q = front.split_conv.in_channels;
    const std::size_t cells = static_cast<std::size_t>(P) * Q;

    std::vector<std::vector<double>> per_image(images.size());
    parallel_for_indexed(images.size(), threads, [&](std::size_t i) {
        Tensor<float> x = front.forward_x(images[i]);
        Tensor<float> z = front.forward_z_from_x(x);
        std::vector<double> m(cells);
        for (int p = 0; p < P; ++p)
            for (int q = 0; q < Q; ++q)
                m[static_cast<std::size_t>(p) * Q + q] =
                    rho_pq(z.channel_ptr(p), z.height(), z.width(), x.channel_ptr(q), x.height(), x.width());
        per_image[i] = std::move(m);
    });

    CorrelationMatrix out;
    out.P = P;
    out.Q = Q;
    out.sample_count = static_cast<int>(images.size());
    out.rho.assign(cells, 0.0);
    for (const auto& m : per_image)
        for (std::size_t c = 0; c < cells; ++c) out.rho[c] += m[c];
    for (std::size_t c = 0; c < cells; ++c) out.rho[c] /= static_cast<double>(images.size());
    return out;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

ChannelSelection select_channels(const CorrelationMatrix& stats, int C) {
    if (C > stats.P) throw ConfigError("select_channels: C exceeds channel count");
    if (!is_power_of_two(C)) throw ConfigError("select_channels: C must be a power of two");
    std::vector<double> score(static_cast<std::size_t>(stats.P), 0.0);
    for (int p = 0; p < stats.P; ++p) {
        double s = 0.0;
        for (int q = 0; q < stats.Q; ++q) s += stats.at(p, q);
        score[p] = s;
    }
    std::vector<int> idx(static_cast<std::size_t>(stats.P));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return a < b;
    });
    ChannelSelection sel;
    sel.order.assign(idx.begin(), idx.begin() + C);
    return sel;
}

std::string selection_to_text(const CorrelationMatrix& stats, const ChannelSelection& sel) {
    std::ostringstream os;
    os << "version 1\n";
    os << "P " << stats.P << "\n";
    os << "Q " << stats.Q << "\n";
    os << "C " << sel.C() << "\n";
    os << "sample_count " << stats.sample_count << "\n";
    os << "order ";
    for (int i = 0; i < sel.C(); ++i) os << (i ? "," : "") << sel.order[i];
    os << "\n";
    os << "rho\n";
    char buf[64];
    for (int p = 0; p < stats.P; ++p) {
        for (int q = 0; q < stats.Q; ++q) {
            std::snprintf(buf, sizeof(buf), "%.17g", stats.at(p, q));
            os << (q ? "," : "") << buf;
        }
        os << "\n";
    }
    return os.str();
}

namespace {

double parse_double_field(const std::string& tok) {
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError("selection file: bad number '" + tok + "'");
    }
}

int parse_int_field(const std::string& tok) {
    try {
        std::size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError("selection file: bad integer '" + tok + "'");
    }
}

} // namespace

SelectionFile parse_selection_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    SelectionFile out;
    int version = -1;
    bool in_rho = false;
    int rho_row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (in_rho) {
            if (rho_row >= out.stats.P) throw DataError("selection file: too many rho rows");
            std::istringstream ls(line);
            std::string cell;
            int q = 0;
            while (std::getline(ls, cell, ',')) {
                if (q >= out.stats.Q) throw DataError("selection file: too many rho columns");
                out.stats.at(rho_row, q) = parse_double_field(cell);
                ++q;
            }
            if (q != out.stats.Q) throw DataError("selection file: short rho row");
            ++rho_row;
            continue;
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "version") {
            ls >> version;
        } else if (key == "P") {
            ls >> out.stats.P;
        } else if (key == "Q") {
            ls >> out.stats.Q;
        } else if (key == "C") {
            int c;
            ls >> c;
            out.selection.order.reserve(static_cast<std::size_t>(c));
        } else if (key == "sample_count") {
            ls >> out.stats.sample_count;
        } else if (key == "order") {
            std::string rest;
            ls >> rest;
            std::istringstream rs(rest);
            std::string cell;
            while (std::getline(rs, cell, ',')) out.selection.order.push_back(parse_int_field(cell));
        } else if (key == "rho") {
            if (out.stats.P <= 0 || out.stats.Q <= 0) throw DataError("selection file: rho before dims");
            out.stats.rho.assign(static_cast<std::size_t>(out.stats.P) * out.stats.Q, 0.0);
            in_rho = true;
        } else {
            throw DataError("selection file: unknown field '" + key + "'");
        }
    }
    if (version != 1) throw DataError("selection file: missing or unsupported version");
    if (!in_rho || rho_row != out.stats.P) throw DataError("selection file: incomplete rho matrix");
    if (out.selection.order.empty()) throw DataError("selection file: missing order");
    for (int ch : out.selection.order)
        if (ch < 0 || ch >= out.stats.P) throw DataError("selection file: order index out of range");
    return out;
}

void write_selection_file(const std::string& path, const CorrelationMatrix& stats, const ChannelSelection& sel) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << selection_to_text(stats, sel);
    if (!f) throw DataError("write failed: " + path);
}

SelectionFile read_selection_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_selection_text(ss.str());
}

} // namespace bafc
