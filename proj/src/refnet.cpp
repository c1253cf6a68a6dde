#include "binarray/refnet.hpp"

#include <algorithm>
#include <limits>

#include "binarray/error.hpp"

namespace binarray::ref {

namespace {

void check_input(const Tensor& x, const LayerSpec& s) {
  if (x.size() != s.input_size()) {
    throw InvalidInput("layer '" + s.name + "': input has " + std::to_string(x.size()) + " values, expected " +
                       std::to_string(s.input_size()));
  }
}

// Zero-padded read of x[c][row][col] with signed coordinates.
template <class T>
T padded_at(std::span<const T> x, const LayerSpec& s, std::size_t c, std::ptrdiff_t row, std::ptrdiff_t col) {
  if (row < 0 || col < 0 || row >= static_cast<std::ptrdiff_t>(s.in_height) ||
      col >= static_cast<std::ptrdiff_t>(s.in_width)) {
    return T{};
  }
  return x[(c * s.in_height + static_cast<std::size_t>(row)) * s.in_width + static_cast<std::size_t>(col)];
}

// Visits every (coefficient index, input value) pair of the window of output
// channel d at output position (u, v), in filter order (c, ky, kx).
template <class T, class F>
void for_each_tap(std::span<const T> x, const LayerSpec& s, std::size_t d, std::size_t u, std::size_t v, F&& f) {
  const auto row0 = static_cast<std::ptrdiff_t>(v * s.stride) - static_cast<std::ptrdiff_t>(s.padding);
  const auto col0 = static_cast<std::ptrdiff_t>(u * s.stride) - static_cast<std::ptrdiff_t>(s.padding);
  const bool depthwise = s.kind == LayerKind::kDepthwise;
  const std::size_t channels = depthwise ? 1 : s.in_channels;
  std::size_t i = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t src = depthwise ? d : c;
    for (std::size_t ky = 0; ky < s.kernel_height; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_width; ++kx, ++i) {
        f(i, padded_at(x, s, src, row0 + static_cast<std::ptrdiff_t>(ky), col0 + static_cast<std::ptrdiff_t>(kx)));
      }
    }
  }
}

void require_conv(const LayerSpec& s) {
  if (!s.is_conv_like()) throw InvalidInput("layer '" + s.name + "' is not a convolution");
}

}  // namespace

Tensor conv2d_ref(const Tensor& x, const Tensor& weights, std::span<const double> bias, const LayerSpec& s) {
  require_conv(s);
  check_input(x, s);
  const std::size_t n_c = s.coeffs_per_filter();
  if (weights.size() != s.out_channels * n_c) {
    throw InvalidInput("layer '" + s.name + "': weights of shape " + shape_string(weights.shape()) +
                       " do not match the layer");
  }
  if (!bias.empty() && bias.size() != s.out_channels) throw InvalidInput("bias length mismatch");
  const std::size_t u_n = s.out_width(), v_n = s.out_height();
  Tensor out({s.out_channels, v_n, u_n});
  const auto w = weights.data();
  for (std::size_t d = 0; d < s.out_channels; ++d) {
    const auto filt = w.subspan(d * n_c, n_c);
    for (std::size_t v = 0; v < v_n; ++v) {
      for (std::size_t u = 0; u < u_n; ++u) {
        double acc = bias.empty() ? 0.0 : bias[d];
        for_each_tap(x.data(), s, d, u, v, [&](std::size_t i, double xv) { acc += filt[i] * xv; });
        out[(d * v_n + v) * u_n + u] = acc;
      }
    }
  }
  return out;
}

Tensor binary_conv2d_ref(const Tensor& x, std::span<const approx::BinaryApprox> bank, const LayerSpec& s) {
  require_conv(s);
  check_input(x, s);
  if (bank.size() != s.out_channels) throw InvalidInput("layer '" + s.name + "': one approximation per filter");
  const std::size_t u_n = s.out_width(), v_n = s.out_height();
  Tensor out({s.out_channels, v_n, u_n});
  for (std::size_t d = 0; d < s.out_channels; ++d) {
    const auto& a = bank[d];
    if (a.n_c() != s.coeffs_per_filter()) throw InvalidInput("layer '" + s.name + "': N_c mismatch");
    std::vector<double> p(a.levels());
    for (std::size_t v = 0; v < v_n; ++v) {
      for (std::size_t u = 0; u < u_n; ++u) {
        std::fill(p.begin(), p.end(), 0.0);
        for_each_tap(x.data(), s, d, u, v, [&](std::size_t i, double xv) {
          for (std::size_t m = 0; m < p.size(); ++m) p[m] += a.planes.bit(m, i) ? xv : -xv;
        });
        double acc = a.bias.value_or(0.0);
        for (std::size_t m = 0; m < p.size(); ++m) acc += a.alphas[m] * p[m];
        out[(d * v_n + v) * u_n + u] = acc;
      }
    }
  }
  return out;
}

Tensor maxpool_relu_ref(const Tensor& x, std::size_t pool_w, std::size_t pool_h, bool relu) {
  if (x.rank() != 3) throw InvalidInput("max-pool expects a [C][H][W] tensor");
  const std::size_t c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (pool_w == 0 || pool_h == 0 || w % pool_w != 0 || h % pool_h != 0) {
    throw InvalidInput("pooling window must divide the input (downsampling only)");
  }
  const std::size_t ho = h / pool_h, wo = w / pool_w;
  Tensor out({c_n, ho, wo});
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xo = 0; xo < wo; ++xo) {
        double m = relu ? 0.0 : -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < pool_h; ++dy) {
          for (std::size_t dx = 0; dx < pool_w; ++dx) {
            m = std::max(m, x[(c * h + y * pool_h + dy) * w + xo * pool_w + dx]);
          }
        }
        out[(c * ho + y) * wo + xo] = m;
      }
    }
  }
  return out;
}

Tensor dense_ref(const Tensor& x, const Tensor& weights, std::span<const double> bias) {
  if (x.empty() || weights.empty() || weights.size() % x.size() != 0) {
    throw InvalidInput("dense: weights of shape " + shape_string(weights.shape()) + " do not match input length " +
                       std::to_string(x.size()));
  }
  const std::size_t d_n = weights.size() / x.size();
  if (weights.dim(0) != d_n) throw InvalidInput("dense: weights must be [D][N_in]");
  if (!bias.empty() && bias.size() != d_n) throw InvalidInput("dense: bias length mismatch");
  Tensor out({d_n});
  for (std::size_t d = 0; d < d_n; ++d) {
    double acc = bias.empty() ? 0.0 : bias[d];
    for (std::size_t i = 0; i < x.size(); ++i) acc += weights[d * x.size() + i] * x[i];
    out[d] = acc;
  }
  return out;
}

namespace {

std::size_t capped(std::size_t levels, std::size_t cap) { return cap == 0 ? levels : std::min(levels, cap); }

void require_supported(const LayerSpec& l) {
  if (l.kind == LayerKind::kUnsupported) {
    throw ConfigError("layer '" + l.name + "': unsupported layer kind '" + l.kind_text + "'");
  }
}

}  // namespace

Tensor infer_real(const NetworkSpec& net, std::span<const ApproxBank> banks, const Tensor& image,
                  std::size_t level_cap) {
  if (banks.size() != net.layers.size()) throw InvalidInput("one weight bank per layer required");
  if (image.size() != net.input_size()) throw InvalidInput("image size does not match the network input");
  Tensor x = image;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& l = net.layers[k];
    require_supported(l);
    ApproxBank bank;
    for (const auto& a : banks[k]) {
      approx::BinaryApprox t = a;
      const std::size_t m = capped(l.levels, level_cap);
      t.planes = a.planes.truncated(m);
      t.alphas.resize(m);
      bank.push_back(std::move(t));
    }
    const bool relu = l.activation == Activation::kRelu;
    if (l.is_conv_like()) {
      const Tensor conv = binary_conv2d_ref(x, bank, l);
      x = (l.pool_size() == 1 && !relu) ? conv : maxpool_relu_ref(conv, l.pool_width, l.pool_height, relu);
    } else {
      // A dense layer is a 1x1 convolution over the flattened input.
      const Tensor flat({1, 1, x.size()}, {x.values()});
      LayerSpec as_conv = l;
      as_conv.kind = LayerKind::kConv;
      as_conv.in_width = x.size();
      as_conv.in_height = 1;
      as_conv.in_channels = 1;
      as_conv.kernel_width = x.size();
      as_conv.kernel_height = 1;
      as_conv.stride = 1;
      as_conv.padding = 0;
      const Tensor y = binary_conv2d_ref(flat, bank, as_conv);
      std::vector<double> v(y.values());
      if (relu) {
        for (double& e : v) e = std::max(e, 0.0);
      }
      x = Tensor({v.size()}, std::move(v));
    }
  }
  return x;
}

FixedInference infer_fixed(const NetworkSpec& net, std::span<const FixedLayer> layers, const IntTensor& image,
                           std::size_t level_cap) {
  if (layers.size() != net.layers.size()) throw InvalidInput("one fixed-point layer per network layer required");
  if (image.size() != net.input_size()) throw InvalidInput("image size does not match the network input");
  FixedInference r;
  std::vector<std::int32_t> x(image.values());
  IntTensor out;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& l = net.layers[k];
    require_supported(l);
    const FixedLayer& fl = layers[k];
    if (fl.channels != l.out_channels || fl.n_c != l.coeffs_per_filter() || fl.levels < l.levels) {
      throw InvalidInput("layer '" + l.name + "': fixed-point weights do not match the layer");
    }
    const std::size_t m_eff = capped(l.levels, level_cap);
    const int shift = l.requant_shift();
    const bool relu = l.activation == Activation::kRelu;
    const std::int32_t floor_value = relu ? 0 : static_cast<std::int32_t>(l.out_format.min_raw());

    // Dense layers read the flattened input as a single window.
    LayerSpec g = l;
    if (l.kind == LayerKind::kDense) {
      g.kind = LayerKind::kConv;
      g.in_width = l.in_channels;
      g.in_height = 1;
      g.in_channels = 1;
      g.kernel_width = l.in_channels;
      g.kernel_height = 1;
      g.stride = 1;
      g.padding = 0;
    }
    const std::size_t u_n = g.out_width(), v_n = g.out_height();
    std::vector<std::int32_t> conv(l.out_channels * u_n * v_n);
    std::vector<std::int64_t> p(m_eff);
    for (std::size_t d = 0; d < l.out_channels; ++d) {
      const auto& planes = fl.planes[d];
      for (std::size_t v = 0; v < v_n; ++v) {
        for (std::size_t u = 0; u < u_n; ++u) {
          std::fill(p.begin(), p.end(), 0);
          for_each_tap(std::span<const std::int32_t>(x), g, d, u, v, [&](std::size_t i, std::int32_t xv) {
            for (std::size_t m = 0; m < m_eff; ++m) p[m] += planes.bit(m, i) ? xv : -xv;
          });
          fxp::FxValue o = fl.bias_value(d);
          for (std::size_t m = 0; m < m_eff; ++m) {
            const fxp::MacResult mac = fxp::fx_mul_add(p[m], fl.alpha(d, m), o);
            r.overflow |= mac.overflow;
            o = mac.value;
          }
          conv[(d * v_n + v) * u_n + u] = static_cast<std::int32_t>(fxp::requantize(o, l.out_format, shift).raw);
        }
      }
    }

    if (l.kind == LayerKind::kDense) {
      for (auto& e : conv) e = std::max(e, floor_value);
      out = IntTensor({l.out_channels}, conv);
    } else {
      const std::size_t pw = l.pool_width, ph = l.pool_height;
      const std::size_t uo = u_n / pw, vo = v_n / ph;
      std::vector<std::int32_t> pooled(l.out_channels * uo * vo);
      for (std::size_t d = 0; d < l.out_channels; ++d) {
        for (std::size_t y = 0; y < vo; ++y) {
          for (std::size_t xo = 0; xo < uo; ++xo) {
            std::int32_t m = floor_value;
            for (std::size_t dy = 0; dy < ph; ++dy) {
              for (std::size_t dx = 0; dx < pw; ++dx) {
                m = std::max(m, conv[(d * v_n + y * ph + dy) * u_n + xo * pw + dx]);
              }
            }
            pooled[(d * vo + y) * uo + xo] = m;
          }
        }
      }
      out = IntTensor({l.out_channels, vo, uo}, pooled);
    }
    x = out.values();
  }
  r.output = std::move(out);
  return r;
}

IntTensor quantize_image(const Tensor& image, fxp::QFormat fmt) {
  std::vector<std::int32_t> raw;
  raw.reserve(image.size());
  for (const double v : image.data()) raw.push_back(static_cast<std::int32_t>(fxp::quantize(v, fmt).raw));
  return IntTensor(image.shape(), std::move(raw));
}

}  // namespace binarray::ref
