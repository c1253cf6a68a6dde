#include "binarray/fxp.hpp"

#include <cmath>
#include <string>

#include "binarray/error.hpp"

namespace binarray::fxp {

void QFormat::validate() const {
  if (total_bits < 1 || total_bits > 64) {
    throw ConfigError("fixed-point width must be in [1, 64], got " + std::to_string(total_bits));
  }
}

double FxValue::to_double() const { return std::ldexp(static_cast<double>(raw), -format.frac_bits); }

std::int64_t saturate(__int128 value, QFormat fmt, bool* clipped) {
  const __int128 lo = fmt.min_raw();
  const __int128 hi = fmt.max_raw();
  const __int128 v = value < lo ? lo : (value > hi ? hi : value);
  if (clipped) *clipped = v != value;
  return static_cast<std::int64_t>(v);
}

FxValue quantize(double x, QFormat fmt) {
  fmt.validate();
  if (!std::isfinite(x)) throw InvalidInput("quantize: non-finite input");
  // std::round rounds halfway cases away from zero.
  const double scaled = std::round(std::ldexp(x, fmt.frac_bits));
  const auto lo = static_cast<double>(fmt.min_raw());
  const auto hi = static_cast<double>(fmt.max_raw());
  std::int64_t raw;
  if (scaled <= lo) {
    raw = fmt.min_raw();
  } else if (scaled >= hi) {
    raw = fmt.max_raw();
  } else {
    raw = static_cast<std::int64_t>(scaled);
  }
  return {raw, fmt};
}

double dequantize(FxValue v) { return v.to_double(); }

std::int64_t round_shift(std::int64_t v, int shift) {
  if (shift <= 0) return v;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (v >= 0) return (v + half) >> shift;
  // Magnitude rounding keeps ties symmetric around zero.
  const auto mag = static_cast<std::uint64_t>(-(static_cast<__int128>(v)));
  return -static_cast<std::int64_t>((mag + static_cast<std::uint64_t>(half)) >> shift);
}

FxValue requantize(FxValue acc, QFormat out_fmt, int shift) {
  if (shift < 0 || shift > kMaxShift) {
    throw ConfigError("requantize shift " + std::to_string(shift) + " outside [0, " +
                      std::to_string(kMaxShift) + "]");
  }
  return {saturate(round_shift(acc.raw, shift), out_fmt), out_fmt};
}

MacResult fx_mul_add(std::int64_t p, FxValue alpha, FxValue o_prev, int align) {
  if (align < 0 || align > kMaxShift) throw ConfigError("alignment shift out of range");
  const QFormat acc_fmt = QFormat::accumulator(o_prev.format.frac_bits);
  const __int128 exact = (static_cast<__int128>(p) * alpha.raw) * (static_cast<__int128>(1) << align) + o_prev.raw;
  MacResult r;
  r.value = {saturate(exact, acc_fmt, &r.overflow), acc_fmt};
  return r;
}

}  // namespace binarray::fxp
