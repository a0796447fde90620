#include "bafc/bitstream.hpp"

#include <cstring>
#include <sstream>

#include "bafc/correlation.hpp"
#include "bafc/errors.hpp"
#include "bafc/util.hpp"

namespace bafc {

namespace {

constexpr std::uint8_t kMagic[4] = {'B', 'A', 'F', 'C'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderFixed = 28;
constexpr std::size_t kChecksumOffset = 24;
constexpr std::uint32_t kEndMarker = 0xA55A;

// ---- carry-less range coder (Subbotin style), binary symbols -------------
//
// 32-bit low/range, bytewise renormalization. Probabilities are 12-bit
// fixed-point estimates of P(bit == 0), adapted with a shift-5 exponential
// update, which keeps them inside [31, 4065].

constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kBot = 1u << 16;
constexpr int kProbBits = 12;
constexpr std::uint16_t kProbInit = 1u << (kProbBits - 1);
constexpr int kProbShift = 5;

class RangeEncoder {
public:
    explicit RangeEncoder(std::vector<std::uint8_t>& out) : out_(out) {}

    void encode_bit(std::uint16_t& prob, int bit) {
        std::uint32_t bound = (range_ >> kProbBits) * prob;
        if (bit == 0) {
            range_ = bound;
            prob = static_cast<std::uint16_t>(prob + (((1u << kProbBits) - prob) >> kProbShift));
        } else {
            low_ += bound;
            range_ -= bound;
            prob = static_cast<std::uint16_t>(prob - (prob >> kProbShift));
        }
        normalize();
    }

    void flush() {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
            low_ <<= 8;
        }
    }

private:
    void normalize() {
        while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
            out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
            low_ <<= 8;
            range_ <<= 8;
        }
    }

    std::vector<std::uint8_t>& out_;
    std::uint32_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
};

class RangeDecoder {
public:
    RangeDecoder(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {
        for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    }

    int decode_bit(std::uint16_t& prob) {
        std::uint32_t bound = (range_ >> kProbBits) * prob;
        int bit;
        if (code_ - low_ < bound) {
            bit = 0;
            range_ = bound;
            prob = static_cast<std::uint16_t>(prob + (((1u << kProbBits) - prob) >> kProbShift));
        } else {
            bit = 1;
            low_ += bound;
            range_ -= bound;
            prob = static_cast<std::uint16_t>(prob - (prob >> kProbShift));
        }
        normalize();
        return bit;
    }

    bool exhausted() const { return p_ == end_; }

private:
    std::uint8_t next_byte() {
        if (p_ == end_) throw DataError("bitstream: payload truncated");
        return *p_++;
    }

    void normalize() {
        while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
            code_ = (code_ << 8) | next_byte();
            low_ <<= 8;
            range_ <<= 8;
        }
    }

    const std::uint8_t* p_;
    const std::uint8_t* end_;
    std::uint32_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
};

// LZMA-style bit tree: one adaptive probability per node, symbols sent
// MSB-first so each bit is conditioned on the prefix above it.
class BitTree {
public:
    BitTree(int bits) : bits_(bits), probs_(static_cast<std::size_t>(1) << bits, kProbInit) {}

    void encode(RangeEncoder& enc, std::uint32_t sym) {
        std::uint32_t m = 1;
        for (int i = bits_ - 1; i >= 0; --i) {
            int bit = static_cast<int>((sym >> i) & 1u);
            enc.encode_bit(probs_[m], bit);
            m = (m << 1) | static_cast<std::uint32_t>(bit);
        }
    }

    std::uint32_t decode(RangeDecoder& dec) {
        std::uint32_t m = 1;
        for (int i = 0; i < bits_; ++i) m = (m << 1) | static_cast<std::uint32_t>(dec.decode_bit(probs_[m]));
        return m - (1u << bits_);
    }

private:
    int bits_;
    std::vector<std::uint16_t> probs_;
};

// ---- payload codecs -------------------------------------------------------

std::vector<std::uint8_t> pack_raw(const TiledImage& img) {
    std::vector<std::uint8_t> out;
    std::size_t total = img.pixels.size();
    out.reserve((total * img.n_bits + 7) / 8);
    std::uint32_t acc = 0;
    int acc_bits = 0;
    for (std::size_t i = 0; i < total; ++i) {
        acc = (acc << img.n_bits) | img.pixels[i];
        acc_bits += img.n_bits;
        while (acc_bits >= 8) {
            acc_bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> acc_bits) & 0xFF));
        }
    }
    if (acc_bits > 0) out.push_back(static_cast<std::uint8_t>((acc << (8 - acc_bits)) & 0xFF));
    return out;
}

void unpack_raw(const std::uint8_t* payload, std::size_t payload_len, TiledImage& img) {
    std::size_t total = img.pixels.size();
    std::size_t need = (total * static_cast<std::size_t>(img.n_bits) + 7) / 8;
    if (payload_len != need) throw DataError("bitstream: raw payload length mismatch");
    std::uint32_t acc = 0;
    int acc_bits = 0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < total; ++i) {
        while (acc_bits < img.n_bits) {
            acc = (acc << 8) | payload[pos++];
            acc_bits += 8;
        }
        acc_bits -= img.n_bits;
        img.pixels[i] = static_cast<std::uint8_t>((acc >> acc_bits) & ((1u << img.n_bits) - 1));
    }
}

std::vector<std::uint8_t> encode_med_range(const TiledImage& img) {
    std::vector<std::uint8_t> out;
    RangeEncoder enc(out);
    BitTree residuals(img.n_bits);
    std::vector<std::uint16_t> marker_probs(16, kProbInit);

    const int h = img.height();
    const int w = img.width();
    const std::uint32_t mask = (1u << img.n_bits) - 1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int left = x > 0 ? img.pixels[static_cast<std::size_t>(y) * w + (x - 1)] : 0;
            int up = y > 0 ? img.pixels[static_cast<std::size_t>(y - 1) * w + x] : 0;
            int up_left = (x > 0 && y > 0) ? img.pixels[static_cast<std::size_t>(y - 1) * w + (x - 1)] : 0;
            int pred = med_predict(left, up, up_left);
            std::uint32_t res = (static_cast<std::uint32_t>(img.pixels[static_cast<std::size_t>(y) * w + x]) -
                                 static_cast<std::uint32_t>(pred)) &
                                mask;
            residuals.encode(enc, res);
        }
    }
    for (int i = 15; i >= 0; --i) enc.encode_bit(marker_probs[i], static_cast<int>((kEndMarker >> i) & 1u));
    enc.flush();
    return out;
}

void decode_med_range(const std::uint8_t* payload, std::size_t payload_len, TiledImage& img) {
    RangeDecoder dec(payload, payload_len);
    BitTree residuals(img.n_bits);
    std::vector<std::uint16_t> marker_probs(16, kProbInit);

    const int h = img.height();
    const int w = img.width();
    const std::uint32_t mask = (1u << img.n_bits) - 1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int left = x > 0 ? img.pixels[static_cast<std::size_t>(y) * w + (x - 1)] : 0;
            int up = y > 0 ? img.pixels[static_cast<std::size_t>(y - 1) * w + x] : 0;
            int up_left = (x > 0 && y > 0) ? img.pixels[static_cast<std::size_t>(y - 1) * w + (x - 1)] : 0;
            int pred = med_predict(left, up, up_left);
            std::uint32_t res = residuals.decode(dec);
            img.pixels[static_cast<std::size_t>(y) * w + x] =
                static_cast<std::uint8_t>((res + static_cast<std::uint32_t>(pred)) & mask);
        }
    }
    std::uint32_t marker = 0;
    for (int i = 0; i < 16; ++i) marker = (marker << 1) | static_cast<std::uint32_t>(dec.decode_bit(marker_probs[15 - i]));
    if (marker != kEndMarker) throw DataError("bitstream: end marker mismatch");
}

std::vector<std::uint8_t> build_header(const QuantizedPack& pack, CodecId codec, std::uint32_t payload_len) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderFixed + pack.order.size() * 6);
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(codec));
    out.push_back(static_cast<std::uint8_t>(pack.n_bits));
    out.push_back(0);
    put_u32le(out, static_cast<std::uint32_t>(pack.C()));
    put_u32le(out, static_cast<std::uint32_t>(pack.channel_h));
    put_u32le(out, static_cast<std::uint32_t>(pack.channel_w));
    put_u32le(out, payload_len);
    put_u32le(out, 0); // checksum patched after assembly
    for (int p : pack.order) put_u16le(out, static_cast<std::uint16_t>(p));
    for (const auto& [m, M] : pack.side_info) {
        put_u16le(out, m);
        put_u16le(out, M);
    }
    return out;
}

void patch_checksum(std::vector<std::uint8_t>& bytes) {
    std::uint32_t sum = fnv1a32(bytes.data(), bytes.size());
    for (int i = 0; i < 4; ++i) bytes[kChecksumOffset + i] = static_cast<std::uint8_t>((sum >> (8 * i)) & 0xFF);
}

StreamInfo parse_header(const std::uint8_t* bytes, std::size_t size, std::size_t& payload_len_out) {
    if (size < kHeaderFixed) throw DataError("bitstream: stream shorter than fixed header");
    if (std::memcmp(bytes, kMagic, 4) != 0) throw DataError("bitstream: bad magic");
    if (bytes[4] != kVersion) throw DataError("bitstream: unsupported version");
    if (bytes[5] > 2) throw DataError("bitstream: unknown codec id");
    StreamInfo info;
    info.codec = static_cast<CodecId>(bytes[5]);
    info.n_bits = bytes[6];
    if (info.n_bits < 2 || info.n_bits > 8) throw DataError("bitstream: n_bits out of range");
    info.C = static_cast<int>(get_u32le(bytes + 8));
    info.channel_h = static_cast<int>(get_u32le(bytes + 12));
    info.channel_w = static_cast<int>(get_u32le(bytes + 16));
    payload_len_out = get_u32le(bytes + 20);
    if (info.C < 1 || info.C > 65535 || !is_power_of_two(info.C))
        throw DataError("bitstream: channel count not a power of two");
    if (info.channel_h < 1 || info.channel_w < 1) throw DataError("bitstream: bad channel dimensions");
    std::size_t expect = kHeaderFixed + static_cast<std::size_t>(info.C) * 6 + payload_len_out;
    if (size != expect) throw DataError("bitstream: stream length mismatch");

    std::vector<std::uint8_t> copy(bytes, bytes + size);
    std::uint32_t stored = get_u32le(bytes + kChecksumOffset);
    std::memset(copy.data() + kChecksumOffset, 0, 4);
    if (fnv1a32(copy.data(), copy.size()) != stored) throw DataError("bitstream: checksum mismatch");

    const std::uint8_t* p = bytes + kHeaderFixed;
    info.order.resize(info.C);
    for (int i = 0; i < info.C; ++i, p += 2) info.order[i] = get_u16le(p);
    info.side_info.resize(info.C);
    for (int i = 0; i < info.C; ++i, p += 4) {
        half_bits m = get_u16le(p);
        half_bits M = get_u16le(p + 2);
        if (!half_is_finite(m) || !half_is_finite(M)) throw DataError("bitstream: non-finite side info");
        if (half_to_float(m) > half_to_float(M)) throw DataError("bitstream: inverted side info range");
        info.side_info[i] = {m, M};
    }
    return info;
}

} // namespace

const char* codec_name(CodecId id) {
    switch (id) {
    case CodecId::raw:
        return "raw";
    case CodecId::med_range:
        return "med_range";
    case CodecId::external:
        return "external";
    }
    throw ConfigError("codec_name: unknown codec id");
}

CodecId codec_from_name(const std::string& name) {
    if (name == "raw") return CodecId::raw;
    if (name == "med_range") return CodecId::med_range;
    if (name == "external") return CodecId::external;
    throw ConfigError("unknown codec '" + name + "' (expected raw, med_range, or external)");
}

int med_predict(int left, int up, int up_left) {
    if (up_left >= std::max(left, up)) return std::min(left, up);
    if (up_left <= std::min(left, up)) return std::max(left, up);
    return left + up - up_left;
}

Bitstream encode(const QuantizedPack& pack, CodecId codec) {
    pack.validate();
    std::vector<std::uint8_t> payload;
    if (codec != CodecId::external) {
        TiledImage img = tile(pack);
        payload = codec == CodecId::raw ? pack_raw(img) : encode_med_range(img);
    }
    Bitstream bs;
    bs.bytes = build_header(pack, codec, static_cast<std::uint32_t>(payload.size()));
    bs.bytes.insert(bs.bytes.end(), payload.begin(), payload.end());
    patch_checksum(bs.bytes);
    bs.header_bits = static_cast<long long>(kHeaderFixed + static_cast<std::size_t>(pack.C()) * 2) * 8;
    bs.side_info_bits = side_info_bits(pack);
    // Raw payloads are counted at their exact n-bit cost; the padding that
    // rounds the last byte up is transport overhead, not code bits.
    bs.payload_bits = codec == CodecId::raw ? static_cast<long long>(pack.n_bits) * pack.C() * pack.channel_h *
                                                  pack.channel_w
                                            : static_cast<long long>(payload.size()) * 8;
    return bs;
}

QuantizedPack decode(const std::vector<std::uint8_t>& bytes) { return decode(bytes.data(), bytes.size()); }

QuantizedPack decode(const std::uint8_t* bytes, std::size_t size) {
    std::size_t payload_len = 0;
    StreamInfo info = parse_header(bytes, size, payload_len);
    if (info.codec == CodecId::external)
        throw DataError("bitstream: external-codec stream carries no payload; import the graymap instead");

    TiledImage img;
    img.grid_rows = tile_grid_rows(info.C);
    img.grid_cols = tile_grid_cols(info.C);
    img.channel_h = info.channel_h;
    img.channel_w = info.channel_w;
    img.n_bits = info.n_bits;
    img.pixels.assign(static_cast<std::size_t>(img.height()) * img.width(), 0);

    const std::uint8_t* payload = bytes + kHeaderFixed + static_cast<std::size_t>(info.C) * 6;
    if (info.codec == CodecId::raw)
        unpack_raw(payload, payload_len, img);
    else
        decode_med_range(payload, payload_len, img);

    QuantizedPack pack;
    pack.n_bits = info.n_bits;
    pack.channel_h = info.channel_h;
    pack.channel_w = info.channel_w;
    pack.order = info.order;
    pack.side_info = info.side_info;
    pack.codes = untile(img, info.channel_h, info.channel_w, info.C);
    pack.validate();
    return pack;
}

StreamInfo inspect(const std::uint8_t* bytes, std::size_t size) {
    std::size_t payload_len = 0;
    return parse_header(bytes, size, payload_len);
}

PgmExport export_tile_pgm(const QuantizedPack& pack) {
    pack.validate();
    TiledImage img = tile(pack);
    int maxval = (1 << pack.n_bits) - 1;

    PgmExport out;
    std::ostringstream head;
    head << "P5\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
    std::string hs = head.str();
    out.pgm.assign(hs.begin(), hs.end());
    out.pgm.insert(out.pgm.end(), img.pixels.begin(), img.pixels.end());

    std::ostringstream side;
    side << "version,1\n";
    side << "codec,external\n";
    side << "n_bits," << pack.n_bits << '\n';
    side << "channels," << pack.C() << '\n';
    side << "channel_h," << pack.channel_h << '\n';
    side << "channel_w," << pack.channel_w << '\n';
    side << "order";
    for (int p : pack.order) side << ',' << p;
    side << '\n';
    side << "side_info";
    side << std::hex;
    for (const auto& [m, M] : pack.side_info) side << ',' << m << ',' << M;
    side << '\n';
    out.sidecar = side.str();
    return out;
}

namespace {

// Reads one whitespace-delimited PNM token, skipping '#' comment lines.
std::string pgm_token(const std::vector<std::uint8_t>& pgm, std::size_t& pos) {
    auto is_space = [](std::uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (pos < pgm.size()) {
        if (is_space(pgm[pos])) {
            ++pos;
        } else if (pgm[pos] == '#') {
            while (pos < pgm.size() && pgm[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < pgm.size() && !is_space(pgm[pos]) && pgm[pos] != '#') ++pos;
    if (start == pos) throw DataError("graymap: truncated header");
    return std::string(pgm.begin() + start, pgm.begin() + pos);
}

int parse_int_field(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(std::string("graymap sidecar: bad integer in ") + what);
    }
}

} // namespace

QuantizedPack import_tile_pgm(const std::vector<std::uint8_t>& pgm, const std::string& sidecar) {
    QuantizedPack pack;
    int sc_version = -1;
    bool saw_order = false, saw_side = false;

    std::istringstream in(sidecar);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        const std::string& key = fields[0];
        if (fields.size() < 2) throw DataError("graymap sidecar: field '" + key + "' has no value");
        if (key == "version") {
            sc_version = parse_int_field(fields.at(1), "version");
        } else if (key == "codec") {
            if (fields.at(1) != "external") throw DataError("graymap sidecar: codec is not external");
        } else if (key == "n_bits") {
            pack.n_bits = parse_int_field(fields.at(1), "n_bits");
        } else if (key == "channels") {
            int C = parse_int_field(fields.at(1), "channels");
            if (C < 1 || !is_power_of_two(C)) throw DataError("graymap sidecar: channel count not a power of two");
            pack.order.assign(C, 0);
        } else if (key == "channel_h") {
            pack.channel_h = parse_int_field(fields.at(1), "channel_h");
        } else if (key == "channel_w") {
            pack.channel_w = parse_int_field(fields.at(1), "channel_w");
        } else if (key == "order") {
            if (pack.order.empty() || fields.size() != pack.order.size() + 1)
                throw DataError("graymap sidecar: order count mismatch");
            for (std::size_t i = 0; i < pack.order.size(); ++i)
                pack.order[i] = parse_int_field(fields[i + 1], "order");
            saw_order = true;
        } else if (key == "side_info") {
            if (pack.order.empty() || fields.size() != pack.order.size() * 2 + 1)
                throw DataError("graymap sidecar: side info count mismatch");
            pack.side_info.resize(pack.order.size());
            for (std::size_t i = 0; i < pack.order.size(); ++i) {
                auto hex16 = [](const std::string& s) -> half_bits {
                    if (s.empty() || s.size() > 4) throw DataError("graymap sidecar: bad side info value");
                    unsigned v = 0;
                    for (char c : s) {
                        int d;
                        if (c >= '0' && c <= '9') d = c - '0';
                        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
                        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
                        else throw DataError("graymap sidecar: bad side info value");
                        v = (v << 4) | static_cast<unsigned>(d);
                    }
                    return static_cast<half_bits>(v);
                };
                pack.side_info[i] = {hex16(fields[1 + 2 * i]), hex16(fields[2 + 2 * i])};
            }
            saw_side = true;
        } else {
            throw DataError("graymap sidecar: unknown field '" + key + "'");
        }
    }
    if (sc_version != 1) throw DataError("graymap sidecar: missing or unsupported version");
    if (pack.order.empty() || !saw_order || !saw_side || pack.channel_h < 1 || pack.channel_w < 1 ||
        pack.n_bits < 2 || pack.n_bits > 8)
        throw DataError("graymap sidecar: incomplete");

    std::size_t pos = 0;
    if (pgm_token(pgm, pos) != "P5") throw DataError("graymap: not a binary P5 graymap");
    int w = parse_int_field(pgm_token(pgm, pos), "width");
    int h = parse_int_field(pgm_token(pgm, pos), "height");
    int maxval = parse_int_field(pgm_token(pgm, pos), "maxval");
    if (pos >= pgm.size()) throw DataError("graymap: truncated header");
    ++pos; // single whitespace byte separates maxval from raster data

    if (maxval != (1 << pack.n_bits) - 1) throw DataError("graymap: maxval does not match n_bits");
    TiledImage img;
    img.grid_rows = tile_grid_rows(static_cast<int>(pack.order.size()));
    img.grid_cols = tile_grid_cols(static_cast<int>(pack.order.size()));
    img.channel_h = pack.channel_h;
    img.channel_w = pack.channel_w;
    img.n_bits = pack.n_bits;
    if (w != img.width() || h != img.height()) throw DataError("graymap: dimensions do not match sidecar");
    std::size_t need = static_cast<std::size_t>(w) * h;
    if (pgm.size() - pos != need) throw DataError("graymap: raster size mismatch");
    img.pixels.assign(pgm.begin() + pos, pgm.end());
    for (std::uint8_t v : img.pixels)
        if (v > maxval) throw DataError("graymap: pixel above maxval");

    pack.codes = untile(img, pack.channel_h, pack.channel_w, static_cast<int>(pack.order.size()));
    pack.validate();
    return pack;
}

} // namespace bafc
