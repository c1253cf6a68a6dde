#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "binarray/fxp.hpp"
#include "json.hpp"

namespace binarray {

enum class LayerKind { kConv, kDense, kDepthwise, kUnsupported };
enum class Activation { kRelu, kNone };

std::string_view layer_kind_name(LayerKind k);

/// One layer, with its input geometry resolved by NetworkSpec chaining.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  std::string kind_text;  // original text, kept for diagnostics on unsupported kinds

  std::size_t in_width = 1;     // W_I
  std::size_t in_height = 1;    // H_I
  std::size_t in_channels = 1;  // C_I
  std::size_t kernel_width = 1;   // W_B
  std::size_t kernel_height = 1;  // H_B
  std::size_t out_channels = 1;   // D
  std::size_t stride = 1;         // S
  std::size_t padding = 0;        // P
  std::size_t pool_width = 1;     // W_P
  std::size_t pool_height = 1;    // H_P
  std::size_t levels = 2;         // M
  Activation activation = Activation::kRelu;
  fxp::QFormat in_format = fxp::QFormat::activation(7);
  fxp::QFormat out_format = fxp::QFormat::activation(7);
  int alpha_frac = 6;  // binary point of the 8-bit alpha values

  bool is_conv_like() const { return kind == LayerKind::kConv || kind == LayerKind::kDepthwise; }

  /// Convolution output grid (U, V). Throws ConfigError on non-integer results.
  std::size_t out_width() const;
  std::size_t out_height() const;
  /// After downsampling max-pool.
  std::size_t pooled_width() const { return out_width() / pool_width; }
  std::size_t pooled_height() const { return out_height() / pool_height; }
  std::size_t pool_size() const { return pool_width * pool_height; }

  /// Coefficients per filter: C_I*W_B*H_B (conv), W_B*H_B (depth-wise), C_I (dense).
  std::size_t coeffs_per_filter() const;
  std::size_t input_size() const { return in_width * in_height * in_channels; }
  std::size_t output_size() const { return pooled_width() * pooled_height() * out_channels; }

  /// Requantize shift from the accumulator binary point (in + alpha) to the output one.
  int requant_shift() const { return in_format.frac_bits + alpha_frac - out_format.frac_bits; }
  int acc_frac() const { return in_format.frac_bits + alpha_frac; }

  /// Throws ConfigError naming the layer when the geometry is not executable.
  void validate() const;
};

struct NetworkSpec {
  std::string name;
  std::size_t in_width = 1;
  std::size_t in_height = 1;
  std::size_t in_channels = 1;
  fxp::QFormat input_format = fxp::QFormat::activation(7);
  std::vector<LayerSpec> layers;

  /// Fills each layer's input geometry and input format from its predecessor.
  void chain();
  void validate() const;
  std::size_t input_size() const { return in_width * in_height * in_channels; }
};

NetworkSpec parse_network(const nlohmann::json& j);
nlohmann::json to_json(const NetworkSpec& net);
NetworkSpec load_network(const std::filesystem::path& path);
void save_network(const NetworkSpec& net, const std::filesystem::path& path);

}  // namespace binarray
