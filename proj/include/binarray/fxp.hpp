#pragma once

#include <cstdint>

namespace binarray::fxp {

inline constexpr int kDataWidth = 8;   // DW: activations
inline constexpr int kMulWidth = 28;   // MULW: DSP cascade
inline constexpr int kMaxShift = kMulWidth - 1;

/// Signed two's-complement fixed-point format.
struct QFormat {
  int total_bits = kDataWidth;
  int frac_bits = 0;

  constexpr std::int64_t min_raw() const { return -(std::int64_t{1} << (total_bits - 1)); }
  constexpr std::int64_t max_raw() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  constexpr bool contains(std::int64_t raw) const { return raw >= min_raw() && raw <= max_raw(); }

  static constexpr QFormat activation(int frac) { return {kDataWidth, frac}; }
  static constexpr QFormat accumulator(int frac) { return {kMulWidth, frac}; }

  /// Throws ConfigError unless 1 <= total_bits <= 64.
  void validate() const;

  bool operator==(const QFormat&) const = default;
};

struct FxValue {
  std::int64_t raw = 0;
  QFormat format;

  double to_double() const;
  bool operator==(const FxValue&) const = default;
};

/// Clamps to the format range; sets *clipped when the value had to move.
std::int64_t saturate(__int128 value, QFormat fmt, bool* clipped = nullptr);

/// Round-to-nearest (ties away from zero) of x * 2^frac, then saturate.
FxValue quantize(double x, QFormat fmt);

double dequantize(FxValue v);

/// v / 2^shift rounded to nearest, ties away from zero. shift >= 0.
std::int64_t round_shift(std::int64_t v, int shift);

/// Accumulator -> activation: rounding right shift then saturation.
/// shift must lie in [0, 27].
FxValue requantize(FxValue acc, QFormat out_fmt, int shift);

struct MacResult {
  FxValue value;
  bool overflow = false;
};

/// One DSP step of the PA cascade: (p * alpha) << align + o_prev, saturated to
/// the 28-bit accumulator range. `p` is the integer partial sum of a PE.
MacResult fx_mul_add(std::int64_t p, FxValue alpha, FxValue o_prev, int align = 0);

}  // namespace binarray::fxp
