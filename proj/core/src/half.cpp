#include "bafc/half.hpp"

#include <cmath>
#include <cstring>

#include "bafc/errors.hpp"

namespace bafc {

namespace {

// round-toward-zero conversion; caller guarantees |v| <= 65504
half_bits f32_to_f16_trunc(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    half_bits sign = static_cast<half_bits>((bits >> 16) & 0x8000u);
    std::uint32_t abs = bits & 0x7FFFFFFFu;
    if (abs == 0) return sign;
    int e = static_cast<int>(abs >> 23) - 127;
    std::uint32_t man = abs & 0x7FFFFFu;
    if (e >= -14) {
        // normal half
        half_bits he = static_cast<half_bits>(e + 15);
        half_bits hm = static_cast<half_bits>(man >> 13);
        return static_cast<half_bits>(sign | (he << 10) | hm);
    }
    int shift = -14 - e; // >= 1
    if (shift > 10) return sign; // |v| < 2^-24 truncates to zero
    std::uint32_t full = 0x800000u | man;
    half_bits hm = static_cast<half_bits>(full >> (13 + shift));
    return static_cast<half_bits>(sign | hm);
}

// one representable step toward -inf
half_bits step_down(half_bits h) {
    if (h == 0x0000u) return 0x8001u; // +0 -> smallest negative subnormal
    if (h & 0x8000u) return static_cast<half_bits>(h + 1);
    return static_cast<half_bits>(h - 1);
}

// one representable step toward +inf
half_bits step_up(half_bits h) {
    if (h == 0x8000u) return 0x0001u; // -0 -> smallest positive subnormal
    if (h & 0x8000u) return static_cast<half_bits>(h - 1);
    return static_cast<half_bits>(h + 1);
}

} // namespace

float half_to_float(half_bits h) {
    int sign = (h & 0x8000u) ? -1 : 1;
    int e = (h >> 10) & 0x1F;
    int man = h & 0x3FF;
    if (e == 0) {
        return static_cast<float>(sign * std::ldexp(static_cast<double>(man), -24));
    }
    if (e == 31) {
        if (man == 0) return sign > 0 ? HUGE_VALF : -HUGE_VALF;
        return std::nanf("");
    }
    return static_cast<float>(sign * std::ldexp(static_cast<double>(1024 + man), e - 25));
}

bool half_is_finite(half_bits h) {
    return ((h >> 10) & 0x1F) != 31;
}

half_bits float_to_half_floor(float v) {
    if (!std::isfinite(v)) throw DataError("binary16 rounding: value is not finite");
    if (v < -kHalfMax) throw DataError("binary16 rounding: value below binary16 range");
    if (v >= kHalfMax) return 0x7BFFu; // floor saturates at the top of the range
    half_bits h = f32_to_f16_trunc(v);
    if (half_to_float(h) > v) h = step_down(h);
    return h;
}

half_bits float_to_half_ceil(float v) {
    if (!std::isfinite(v)) throw DataError("binary16 rounding: value is not finite");
    if (v > kHalfMax) throw DataError("binary16 rounding: value above binary16 range");
    if (v <= -kHalfMax) return 0xFBFFu;
    half_bits h = f32_to_f16_trunc(v);
    if (half_to_float(h) < v) h = step_up(h);
    return h;
}

std::pair<half_bits, half_bits> round_f16_directed(float m, float M) {
    if (!std::isfinite(m) || !std::isfinite(M)) throw DataError("range endpoints must be finite");
    if (m > M) throw DataError("range endpoints out of order");
    if (m < -kHalfMax || M > kHalfMax) throw DataError("range endpoints outside binary16 range");
    return {float_to_half_floor(m), float_to_half_ceil(M)};
}

} // namespace bafc
