#pragma once

// Independent reference computations for the tests. None of these call into
// the library code they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <tuple>
#include <vector>

namespace oracle {

/// Min-norm least squares via the Tikhonov limit: (B^T B + eps I)^-1 B^T w,
/// solved by Gauss-Jordan in long double. Columns are +-1 vectors given as
/// signs[m][i].
inline std::vector<double> pinv_solve(const std::vector<double>& w, const std::vector<std::vector<int>>& signs) {
  const std::size_t m = signs.size();
  std::vector<std::vector<long double>> a(m, std::vector<long double>(m + 1, 0.0L));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      long double g = 0;
      for (std::size_t i = 0; i < w.size(); ++i) g += signs[r][i] * signs[c][i];
      a[r][c] = g + (r == c ? 1e-10L : 0.0L);
    }
    long double rhs = 0;
    for (std::size_t i = 0; i < w.size(); ++i) rhs += signs[r][i] * static_cast<long double>(w[i]);
    a[r][m] = rhs;
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    std::swap(a[piv], a[col]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> x(m);
  for (std::size_t r = 0; r < m; ++r) x[r] = static_cast<double>(a[r][m] / a[r][r]);
  return x;
}

/// Sum of squared differences between w and sum_m signs[m] * alpha[m].
inline double sq_error(const std::vector<double>& w, const std::vector<std::vector<int>>& signs,
                       const std::vector<double>& alpha) {
  long double e = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    long double r = w[i];
    for (std::size_t m = 0; m < signs.size(); ++m) r -= signs[m][i] * static_cast<long double>(alpha[m]);
    e += r * r;
  }
  return static_cast<double>(e);
}

/// Rounding right shift by long division: truncate, then bump the quotient
/// away from zero when the remainder is at least half the divisor.
inline std::int64_t requantize(std::int64_t acc, int shift, int bits = 8) {
  const __int128 div = static_cast<__int128>(1) << shift;
  __int128 q = acc / div;
  const __int128 r = acc - q * div;
  const __int128 twice = r < 0 ? -2 * r : 2 * r;
  if (shift > 0 && twice >= div) q += acc < 0 ? -1 : 1;
  const __int128 lo = -(static_cast<__int128>(1) << (bits - 1));
  const __int128 hi = (static_cast<__int128>(1) << (bits - 1)) - 1;
  return static_cast<std::int64_t>(std::clamp(q, lo, hi));
}

/// Round-half-away of x*2^frac in long double, then clamp.
inline std::int64_t quantize(double x, int frac, int bits = 8) {
  const long double s = std::ldexp(static_cast<long double>(x), frac);
  const long double fl = std::floor(std::fabs(s));
  long double mag = (std::fabs(s) - fl >= 0.5L) ? fl + 1 : fl;
  long double v = s < 0 ? -mag : mag;
  const long double lo = -std::ldexp(1.0L, bits - 1), hi = std::ldexp(1.0L, bits - 1) - 1;
  v = std::clamp(v, lo, hi);
  return static_cast<std::int64_t>(v);
}

/// Pooling-grouped anchor order by sorting all output positions on the key
/// (pool row, pool col, row in pool, col in pool).
inline std::vector<std::size_t> anchor_order(std::size_t w_i, std::size_t h_i, std::size_t w_b, std::size_t h_b,
                                             std::size_t w_p, std::size_t h_p, std::size_t stride = 1,
                                             std::size_t pad = 0) {
  const std::size_t wp = w_i + 2 * pad;
  const std::size_t u = (wp - w_b) / stride + 1, v = (h_i + 2 * pad - h_b) / stride + 1;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t>> keyed;
  for (std::size_t y = 0; y < v; ++y) {
    for (std::size_t x = 0; x < u; ++x) {
      keyed.emplace_back(y / h_p, x / w_p, y % h_p, x % w_p, y * stride * wp + x * stride);
    }
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> out;
  for (const auto& k : keyed) out.push_back(std::get<4>(k));
  return out;
}

/// im2col then matrix product: x [C][H][W], w [D][C][KH][KW] -> [D][V][U].
inline std::vector<double> conv_im2col(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w,
                                       const std::vector<double>& wt, std::size_t d, std::size_t kh, std::size_t kw,
                                       std::size_t stride, std::size_t pad, const std::vector<double>& bias) {
  const std::size_t v = (h + 2 * pad - kh) / stride + 1, u = (w + 2 * pad - kw) / stride + 1;
  const std::size_t k = c * kh * kw;
  std::vector<double> cols(k * u * v, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const std::size_t row = (ci * kh + ky) * kw + kx;
        for (std::size_t oy = 0; oy < v; ++oy) {
          for (std::size_t ox = 0; ox < u; ++ox) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w)) {
              cols[row * u * v + oy * u + ox] = x[(ci * h + iy) * w + ix];
            }
          }
        }
      }
    }
  }
  std::vector<double> out(d * u * v);
  for (std::size_t di = 0; di < d; ++di) {
    for (std::size_t p = 0; p < u * v; ++p) {
      double s = bias.empty() ? 0.0 : bias[di];
      for (std::size_t r = 0; r < k; ++r) s += wt[di * k + r] * cols[r * u * v + p];
      out[di * u * v + p] = s;
    }
  }
  return out;
}

}  // namespace oracle
