#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "binarray/binapprox.hpp"
#include "binarray/network.hpp"
#include "binarray/tensor.hpp"

namespace binarray {

/// One BinaryApprox per output channel of a layer.
using ApproxBank = std::vector<approx::BinaryApprox>;

enum class Algorithm { kGreedy = 1, kRefined = 2 };

/// Approximates a layer filter by filter. `weights` is [D][C][H_B][W_B] for
/// conv, [D][1][H_B][W_B] or [D][H_B][W_B] for depth-wise and [D][N_in] for
/// dense; `bias` is [D] or empty.
ApproxBank approximate_layer(const LayerSpec& layer, const Tensor& weights,
                             std::span<const double> bias, Algorithm alg, std::size_t levels,
                             std::size_t max_iters = approx::kDefaultRefineIterations);

/// Hardware image of a layer's weights: bit-planes, 8-bit alphas sharing one
/// binary point, and biases at the accumulator binary point.
struct FixedLayer {
  std::size_t n_c = 0;
  std::size_t channels = 0;
  std::size_t levels = 0;
  int alpha_frac = 0;
  int acc_frac = 0;
  std::vector<approx::BitPlanes> planes;          // [channel]
  std::vector<std::vector<std::int32_t>> alphas;  // [channel][level], 8-bit raw
  std::vector<std::int64_t> bias;                 // [channel], 28-bit raw

  fxp::FxValue alpha(std::size_t d, std::size_t m) const {
    return {alphas[d][m], fxp::QFormat::activation(alpha_frac)};
  }
  fxp::FxValue bias_value(std::size_t d) const { return {bias[d], fxp::QFormat::accumulator(acc_frac)}; }
};

/// Largest alpha binary point that keeps every alpha in 8 bits while the
/// requantize shift stays inside [0, 27].
int calibrate_alpha_frac(const LayerSpec& layer, std::span<const approx::BinaryApprox> bank);

FixedLayer quantize_layer(const LayerSpec& layer, std::span<const approx::BinaryApprox> bank);

std::vector<FixedLayer> quantize_network(const NetworkSpec& net,
                                         std::span<const ApproxBank> banks);

}  // namespace binarray
