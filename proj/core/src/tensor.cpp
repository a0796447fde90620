#include "bafc/tensor.hpp"

#include <fstream>

#include "bafc/util.hpp"

namespace bafc {

namespace {
constexpr std::uint8_t kFtenVersion = 1;
}

std::vector<std::uint8_t> ften_bytes(const Tensor<float>& t) {
    std::vector<std::uint8_t> out;
    out.reserve(17 + t.size() * 4);
    out.push_back('F');
    out.push_back('T');
    out.push_back('E');
    out.push_back('N');
    out.push_back(kFtenVersion);
    put_u32le(out, static_cast<std::uint32_t>(t.channels()));
    put_u32le(out, static_cast<std::uint32_t>(t.height()));
    put_u32le(out, static_cast<std::uint32_t>(t.width()));
    for (float v : t.data()) put_f32le(out, v);
    return out;
}

Tensor<float> parse_ften(const std::uint8_t* data, std::size_t size) {
    if (size < 17) throw DataError("FTEN: truncated header");
    if (data[0] != 'F' || data[1] != 'T' || data[2] != 'E' || data[3] != 'N')
        throw DataError("FTEN: bad magic");
    if (data[4] != kFtenVersion) throw DataError("FTEN: unsupported version");
    std::uint32_t c = get_u32le(data + 5);
    std::uint32_t h = get_u32le(data + 9);
    std::uint32_t w = get_u32le(data + 13);
    std::uint64_t count = static_cast<std::uint64_t>(c) * h * w;
    if (count > (1ull << 31)) throw DataError("FTEN: unreasonable tensor size");
    if (size != 17 + count * 4) throw DataError("FTEN: payload length does not match dims");
    std::vector<float> vals(count);
    for (std::uint64_t i = 0; i < count; ++i) vals[i] = get_f32le(data + 17 + i * 4);
    auto t = Tensor<float>::from_data(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w), std::move(vals));
    if (!t.all_finite()) throw DataError("FTEN: non-finite samples");
    return t;
}

void write_ften(const std::string& path, const Tensor<float>& t) {
    auto bytes = ften_bytes(t);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path);
}

Tensor<float> read_ften(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_ften(bytes.data(), bytes.size());
}

} // namespace bafc
