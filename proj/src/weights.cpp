#include "binarray/weights.hpp"

#include <cmath>

#include "binarray/error.hpp"

namespace binarray {

ApproxBank approximate_layer(const LayerSpec& layer, const Tensor& weights, std::span<const double> bias,
                             Algorithm alg, std::size_t levels, std::size_t max_iters) {
  const std::size_t d = layer.out_channels;
  const std::size_t n_c = layer.coeffs_per_filter();
  if (weights.empty() || weights.dim(0) != d || weights.size() != d * n_c) {
    throw InvalidInput("layer '" + layer.name + "': weights of shape " + shape_string(weights.shape()) +
                       " do not hold " + std::to_string(d) + " filters of " + std::to_string(n_c) +
                       " coefficients");
  }
  if (!bias.empty() && bias.size() != d) {
    throw InvalidInput("layer '" + layer.name + "': expected " + std::to_string(d) + " biases");
  }
  ApproxBank bank;
  bank.reserve(d);
  const std::span<const double> all = weights.data();
  for (std::size_t f = 0; f < d; ++f) {
    const auto w = all.subspan(f * n_c, n_c);
    approx::BinaryApprox a = alg == Algorithm::kGreedy ? approx::approximate_alg1(w, levels)
                                                       : approx::approximate_alg2(w, levels, max_iters);
    a.bias = bias.empty() ? 0.0 : bias[f];
    bank.push_back(std::move(a));
  }
  return bank;
}

namespace {

void check_bank(const LayerSpec& layer, std::span<const approx::BinaryApprox> bank) {
  if (bank.size() != layer.out_channels) {
    throw InvalidInput("layer '" + layer.name + "': bank holds " + std::to_string(bank.size()) +
                       " filters, layer has " + std::to_string(layer.out_channels));
  }
  for (const auto& a : bank) {
    if (a.n_c() != layer.coeffs_per_filter()) {
      throw InvalidInput("layer '" + layer.name + "': filter has N_c = " + std::to_string(a.n_c()) +
                         ", expected " + std::to_string(layer.coeffs_per_filter()));
    }
    if (a.levels() < layer.levels) {
      throw InvalidInput("layer '" + layer.name + "': filter has " + std::to_string(a.levels()) +
                         " bit-planes, layer needs M = " + std::to_string(layer.levels));
    }
    if (a.alphas.size() != a.levels()) throw InvalidInput("layer '" + layer.name + "': alpha count mismatch");
  }
}

}  // namespace

int calibrate_alpha_frac(const LayerSpec& layer, std::span<const approx::BinaryApprox> bank) {
  const int lo = layer.out_format.frac_bits - layer.in_format.frac_bits;
  const int hi = fxp::kMaxShift + lo;
  double max_alpha = 0.0;
  for (const auto& a : bank) {
    for (const double v : a.alphas) max_alpha = std::max(max_alpha, std::abs(v));
  }
  const auto limit = static_cast<double>(fxp::QFormat::activation(0).max_raw());
  int f = hi;
  while (f > lo && std::round(std::ldexp(max_alpha, f)) > limit) --f;
  return f;
}

FixedLayer quantize_layer(const LayerSpec& layer, std::span<const approx::BinaryApprox> bank) {
  check_bank(layer, bank);
  FixedLayer out;
  out.n_c = layer.coeffs_per_filter();
  out.channels = layer.out_channels;
  out.levels = bank.front().levels();
  out.alpha_frac = layer.alpha_frac;
  out.acc_frac = layer.acc_frac();
  const fxp::QFormat alpha_fmt = fxp::QFormat::activation(out.alpha_frac);
  const fxp::QFormat acc_fmt = fxp::QFormat::accumulator(out.acc_frac);
  for (const auto& a : bank) {
    if (a.levels() != out.levels) throw InvalidInput("layer '" + layer.name + "': filters differ in M");
    out.planes.push_back(a.planes);
    std::vector<std::int32_t> raw;
    raw.reserve(a.alphas.size());
    for (const double v : a.alphas) raw.push_back(static_cast<std::int32_t>(fxp::quantize(v, alpha_fmt).raw));
    out.alphas.push_back(std::move(raw));
    out.bias.push_back(fxp::quantize(a.bias.value_or(0.0), acc_fmt).raw);
  }
  return out;
}

std::vector<FixedLayer> quantize_network(const NetworkSpec& net, std::span<const ApproxBank> banks) {
  if (banks.size() != net.layers.size()) {
    throw InvalidInput("network has " + std::to_string(net.layers.size()) + " layers but " +
                       std::to_string(banks.size()) + " weight banks were given");
  }
  std::vector<FixedLayer> out;
  out.reserve(banks.size());
  for (std::size_t k = 0; k < banks.size(); ++k) out.push_back(quantize_layer(net.layers[k], banks[k]));
  return out;
}

}  // namespace binarray
