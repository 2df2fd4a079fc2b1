#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "edgedet/error.hpp"

namespace edgedet {

// Fixed-point form of a positive real multiplier: real ~= mantissa * 2^-right_shift,
// with the mantissa normalized to [2^30, 2^31).
struct RequantMultiplier {
  std::int64_t mantissa = 0;
  int right_shift = 0;

  double real() const { return std::ldexp(static_cast<double>(mantissa), -right_shift); }
  friend bool operator==(const RequantMultiplier&, const RequantMultiplier&) = default;
};

namespace detail {

// Works for any r in (0, 2^31); used for rescales between activation tensors where
// the ratio may exceed one.
inline RequantMultiplier make_multiplier(double r) {
  if (!(r > 0.0) || !std::isfinite(r))
    throw InvalidArgument("requantization multiplier must be positive and finite");
  int exponent = 0;
  double fraction = std::frexp(r, &exponent);  // r = fraction * 2^exponent, fraction in [0.5, 1)
  auto mantissa = static_cast<std::int64_t>(std::llround(fraction * 2147483648.0));
  if (mantissa == (std::int64_t{1} << 31)) {
    mantissa /= 2;
    ++exponent;
  }
  int shift = 31 - exponent;
  if (shift < 0) throw InvalidArgument("requantization multiplier too large");
  return {mantissa, shift};
}

}  // namespace detail

inline RequantMultiplier quantize_multiplier(double r) {
  if (!(r > 0.0 && r < 1.0))
    throw InvalidArgument("quantize_multiplier expects 0 < r < 1, got " + std::to_string(r));
  return detail::make_multiplier(r);
}

// Rounding right shift, ties away from zero.
inline std::int64_t rounding_shift(std::int64_t x, int shift) {
  if (shift <= 0) return x << -shift;
  if (shift > 62) return 0;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  return x >= 0 ? (x + half) >> shift : -((-x + half) >> shift);
}

// round_half_away(x * m * 2^-s). |x| must stay below 2^31 for the product to fit.
inline std::int64_t apply_multiplier(std::int64_t x, const RequantMultiplier& m) {
  return rounding_shift(x * m.mantissa, m.right_shift);
}

inline std::int8_t saturate_i8(std::int64_t v) {
  if (v < -128) return -128;
  if (v > 127) return 127;
  return static_cast<std::int8_t>(v);
}

inline std::int32_t saturate_i32(double v) {
  if (v <= static_cast<double>(std::numeric_limits<std::int32_t>::min()))
    return std::numeric_limits<std::int32_t>::min();
  if (v >= static_cast<double>(std::numeric_limits<std::int32_t>::max()))
    return std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int32_t>(std::round(v));
}

// Multipliers for a sum of rescaled terms; all share one right shift so the sum can
// be accumulated before the single rounding step.
inline std::vector<RequantMultiplier> shared_shift_multipliers(std::span<const double> reals) {
  double largest = 0.0;
  for (double r : reals) {
    if (!(r > 0.0)) throw InvalidArgument("rescale ratio must be positive");
    largest = std::max(largest, r);
  }
  const int shift = detail::make_multiplier(largest).right_shift;
  std::vector<RequantMultiplier> out;
  out.reserve(reals.size());
  for (double r : reals)
    out.push_back({std::llround(std::ldexp(r, shift)), shift});
  return out;
}

}  // namespace edgedet
