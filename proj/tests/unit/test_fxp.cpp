#include <random>

#include "binarray/error.hpp"
#include "binarray/fxp.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace binarray;
using namespace binarray::fxp;

TEST_CASE("quantize examples") {
  CHECK(quantize(0.0, QFormat::activation(5)).raw == 0);
  CHECK(quantize(300.0, QFormat::activation(0)).raw == 127);
  CHECK(quantize(-300.0, QFormat::activation(0)).raw == -128);
  CHECK(quantize(1.5, QFormat::activation(1)).raw == 3);
  CHECK(quantize(0.25, QFormat::activation(1)).raw == 1);    // tie away from zero
  CHECK(quantize(-0.25, QFormat::activation(1)).raw == -1);
}

TEST_CASE("quantize matches the oracle and round-trips within half an LSB") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int t = 0; t < 20000; ++t) {
    const int frac = static_cast<int>(rng() % 8);
    const double x = ud(rng);
    const FxValue q = quantize(x, QFormat::activation(frac));
    CHECK(q.raw == oracle::quantize(x, frac));
    const double lo = QFormat::activation(frac).min_raw() / std::ldexp(1.0, frac);
    const double hi = QFormat::activation(frac).max_raw() / std::ldexp(1.0, frac);
    if (x >= lo && x <= hi) CHECK(std::abs(dequantize(q) - x) <= std::ldexp(1.0, -frac - 1) + 1e-15);
  }
}

TEST_CASE("re-quantizing an in-range value is the identity") {
  for (int raw = -128; raw <= 127; ++raw) {
    const QFormat f = QFormat::activation(3);
    CHECK(quantize(dequantize({raw, f}), f).raw == raw);
  }
}

TEST_CASE("requantize boundaries") {
  const QFormat out = QFormat::activation(0);
  CHECK(requantize({0, QFormat::accumulator(0)}, out, 4).raw == 0);
  CHECK(requantize({0x0FFFFFF, QFormat::accumulator(0)}, out, 2).raw == 127);
  CHECK(requantize({300, QFormat::accumulator(0)}, out, 1).raw == 127);
  CHECK(requantize({253, QFormat::accumulator(0)}, out, 1).raw == 127);
  CHECK(requantize({252, QFormat::accumulator(0)}, out, 1).raw == 126);
  CHECK(requantize({255, QFormat::accumulator(0)}, out, 1).raw == 127);
  CHECK(requantize({-257, QFormat::accumulator(0)}, out, 1).raw == -128);
  CHECK(requantize({-3, QFormat::accumulator(0)}, out, 1).raw == -2);
  CHECK(requantize({3, QFormat::accumulator(0)}, out, 1).raw == 2);
  CHECK_THROWS_AS(requantize({1, QFormat::accumulator(0)}, out, 28), ConfigError);
  CHECK_THROWS_AS(requantize({1, QFormat::accumulator(0)}, out, -1), ConfigError);
}

TEST_CASE("multiply-add step") {
  const FxValue one{1, QFormat::accumulator(0)};
  const FxValue two{2, QFormat::activation(0)};
  CHECK(fx_mul_add(4, two, one).value.raw == 9);
  CHECK(fx_mul_add(0, two, one).value.raw == 1);
  CHECK_FALSE(fx_mul_add(4, two, one).overflow);
  const auto big = fx_mul_add(1 << 24, FxValue{100, QFormat::activation(0)}, one);
  CHECK(big.overflow);
  CHECK(big.value.raw == QFormat::accumulator(0).max_raw());
}

TEST_CASE("two-level cascade equals the wide-integer sum") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10000; ++t) {
    const std::int64_t p0 = static_cast<std::int64_t>(rng() % 40000) - 20000;
    const std::int64_t p1 = static_cast<std::int64_t>(rng() % 40000) - 20000;
    const std::int64_t a0 = static_cast<std::int64_t>(rng() % 256) - 128;
    const std::int64_t a1 = static_cast<std::int64_t>(rng() % 256) - 128;
    const std::int64_t b = static_cast<std::int64_t>(rng() % 2000000) - 1000000;
    auto o = fx_mul_add(p0, {a0, QFormat::activation(6)}, {b, QFormat::accumulator(13)});
    o = fx_mul_add(p1, {a1, QFormat::activation(6)}, o.value);
    CHECK(o.value.raw == b + a0 * p0 + a1 * p1);
  }
}

TEST_CASE("quantize is monotone") {
  const QFormat f = QFormat::activation(4);
  std::int64_t prev = quantize(-10.0, f).raw;
  for (int i = 1; i <= 20000; ++i) {
    const std::int64_t q = quantize(-10.0 + i * 1e-3, f).raw;
    CHECK(q >= prev);
    prev = q;
  }
}
