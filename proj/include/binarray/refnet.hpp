#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "binarray/network.hpp"
#include "binarray/tensor.hpp"
#include "binarray/weights.hpp"

/// Plain direct-loop CNN inference used as the golden model for the simulator.
namespace binarray::ref {

/// x: [C_I][H_I][W_I]; weights: [D][C_I][H_B][W_B] (depth-wise: [D][1][H_B][W_B]).
/// Returns [D][V][U] before pooling.
Tensor conv2d_ref(const Tensor& x, const Tensor& weights, std::span<const double> bias,
                  const LayerSpec& spec);

/// Same output as conv2d_ref, computed as sum_m alpha_m * <x, B_m> + bias.
Tensor binary_conv2d_ref(const Tensor& x, std::span<const approx::BinaryApprox> bank,
                         const LayerSpec& spec);

/// Downsampling max-pool over [C][H][W]; with `relu` the running max starts at 0.
Tensor maxpool_relu_ref(const Tensor& x, std::size_t pool_w, std::size_t pool_h, bool relu = true);

/// x: flattened input of length N_in; weights: [D][N_in]. Returns [D].
Tensor dense_ref(const Tensor& x, const Tensor& weights, std::span<const double> bias);

/// Real-valued inference with binary-approximated weights. `level_cap`
/// limits each layer to its first bit-planes (0 = all).
Tensor infer_real(const NetworkSpec& net, std::span<const ApproxBank> banks, const Tensor& image,
                  std::size_t level_cap = 0);

struct FixedInference {
  IntTensor output;
  bool overflow = false;  // some accumulator saturated
};

/// Bit-exact fixed-point inference on 8-bit raw activations, rounding and
/// saturating at the same points as the datapath.
FixedInference infer_fixed(const NetworkSpec& net, std::span<const FixedLayer> layers,
                           const IntTensor& image, std::size_t level_cap = 0);

/// Quantizes a real [C][H][W] image to raw activations of `fmt`.
IntTensor quantize_image(const Tensor& image, fxp::QFormat fmt);

}  // namespace binarray::ref
