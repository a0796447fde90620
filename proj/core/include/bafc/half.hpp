#pragma once

#include <cstdint>
#include <utility>

namespace bafc {

// IEEE 754 binary16 stored as a raw bit pattern:
//   [15] sign, [14:10] exponent (bias 15), [9:0] mantissa.
// Quantizer ranges travel as these bit patterns so the decoder sees exactly
// the encoder's values.
using half_bits = std::uint16_t;

inline constexpr float kHalfMax = 65504.0f;

float half_to_float(half_bits h);

bool half_is_finite(half_bits h);

// Largest binary16 <= v (round toward -inf). Throws DataError if v < -65504
// or v is not finite.
half_bits float_to_half_floor(float v);

// Smallest binary16 >= v (round toward +inf). Throws DataError if v > 65504
// or v is not finite.
half_bits float_to_half_ceil(float v);

// Directed rounding of a channel range: m down, M up, so [m, M] is contained
// in the widened interval and quantizer codes can never leave [0, 2^n - 1].
std::pair<half_bits, half_bits> round_f16_directed(float m, float M);

} // namespace bafc
