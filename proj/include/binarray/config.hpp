#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace binarray {

enum class Mode { kHighThroughput, kHighAccuracy };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view text);

/// Accelerator design parameters plus run-time knobs.
/// Written [N_SA, D_arch, M_arch] in reports, "NxDxM" on the command line.
struct SimConfig {
  std::size_t n_sa = 1;
  std::size_t d_arch = 8;
  std::size_t m_arch = 2;
  double clock_hz = 400e6;
  Mode mode = Mode::kHighThroughput;
  std::size_t local_buffer_bytes = 48 * 48 * 3;
  std::size_t feature_memory_bytes = std::size_t{1} << 20;

  void validate() const;

  /// Bit-planes actually processed for a layer that stores `levels` of them.
  /// Throws ConfigError when high-accuracy mode would need more than two passes.
  std::size_t effective_levels(std::size_t levels) const;

  std::string label() const;  // "[1,8,2]"

  /// Accepts "1x32x2", "[1,32,2]" or "1,32,2".
  static SimConfig parse(std::string_view text);
};

}  // namespace binarray
