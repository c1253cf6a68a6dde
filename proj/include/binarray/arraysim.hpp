#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "binarray/config.hpp"
#include "binarray/fxp.hpp"
#include "binarray/isa.hpp"
#include "binarray/network.hpp"
#include "binarray/tensor.hpp"
#include "binarray/weights.hpp"

namespace binarray::sim {

// ---------------------------------------------------------------------------
// Processing element

struct PEState {
  std::int64_t accumulator = 0;
  std::int64_t output = 0;
  std::size_t bit_index = 0;
};

/// One clock: accumulator += b ? x : -x.
PEState pe_step(PEState s, std::int32_t x, bool b);

/// Moves the accumulator into the output register and clears it.
PEState pe_drain(PEState s);

// ---------------------------------------------------------------------------
// Processing array cascade

/// Runs the M multiply-adds of one output channel through the PA cascade,
/// starting from the bias (first PA) or a stored partial result.
fxp::MacResult pa_output(std::span<const std::int64_t> partials, std::span<const fxp::FxValue> alphas,
                         fxp::FxValue bias_or_prev);

// ---------------------------------------------------------------------------
// Activation / max-pool unit

/// Shift register of running maxima for `channels` interleaved streams.
/// Values arrive channel-first; after `pool_size` rounds the maxima are
/// emitted and the registers reset (to 0 with ReLU, to the DW minimum without).
class Amu {
 public:
  Amu(std::size_t pool_size, std::size_t channels, bool relu = true);

  std::optional<std::vector<std::int32_t>> push(std::int32_t value);

  std::size_t channels() const noexcept { return regs_.size(); }

 private:
  void reset();

  std::size_t pool_size_;
  std::int32_t reset_value_;
  std::vector<std::int32_t> regs_;
  std::size_t head_ = 0;
  std::size_t rounds_ = 0;
};

// ---------------------------------------------------------------------------
// Address generation

struct ConvGeometry {
  std::size_t in_width = 1;
  std::size_t in_height = 1;
  std::size_t kernel_width = 1;
  std::size_t kernel_height = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t pool_width = 1;
  std::size_t pool_height = 1;

  static ConvGeometry from_layer(const LayerSpec& l);

  std::size_t padded_width() const { return in_width + 2 * padding; }
  std::size_t out_width() const;
  std::size_t out_height() const;
  std::size_t anchors() const { return out_width() * out_height(); }
  /// Throws ConfigError when the geometry is invalid or pooling does not divide the output.
  void validate() const;
};

struct AguState {
  std::size_t a_cv = 0;  // current convolution window start
  std::size_t a_po = 0;  // current pooling window start
  std::size_t a_cl = 0;  // first anchor of the current row inside the pooling window
  std::size_t a_pr = 0;  // first anchor of the current row of pooling windows
  std::size_t i_cl = 0;  // output column of the pooling window
  std::size_t p_w = 0;
  std::size_t p_h = 0;
  std::size_t emitted = 0;
};

/// Pooling-grouped anchor generator. Addresses are in the zero-padded input
/// frame (width W_I + 2P); with P = 0 they are plain input addresses. The
/// update uses only additions of per-layer constants.
class Agu {
 public:
  explicit Agu(const ConvGeometry& g);

  const AguState& state() const noexcept { return s_; }
  std::size_t anchor() const noexcept { return s_.a_cv; }
  bool done() const noexcept { return s_.emitted >= total_; }
  /// Advances to the next anchor; returns false once all anchors were emitted.
  bool next();

 private:
  ConvGeometry g_;
  std::size_t total_;
  std::size_t step_col_;   // S
  std::size_t step_row_;   // S * padded width
  std::size_t step_pool_;  // W_P * S
  std::size_t step_pool_row_;  // H_P * S * padded width
  std::size_t last_pool_col_;  // U - W_P
  AguState s_;
};

/// Full anchor order for a layer.
std::vector<std::size_t> agu_sequence(const ConvGeometry& g);

/// Output buffer offset of the `arrival`-th pooled value of `channel`:
/// channel-planar, each plane row-major.
std::size_t odg_address(std::size_t arrival, std::size_t channel, std::size_t pooled_width,
                        std::size_t pooled_height);

// ---------------------------------------------------------------------------
// Control unit and systolic array

struct LayerCycles {
  std::size_t layer = 0;
  std::uint64_t cycles = 0;           // CONV stall: accumulation + serial stalls + latency
  std::uint64_t pe_accum_cycles = 0;  // accumulation cycles on the critical path
  std::uint64_t serial_stall_cycles = 0;  // PA serializer slower than the accumulation
  std::uint64_t latency_cycles = 0;       // pipeline fill per job
  std::size_t jobs = 0;          // (channel group, tile) work units
  std::size_t rounds = 0;        // sequential rounds over the physical arrays
  std::size_t tiles = 1;
  std::size_t level_chunks = 1;  // passes over the bit-planes (2 in high-accuracy mode)
  std::size_t levels = 0;        // effective M
  std::size_t windows = 0;       // anchors per job (largest tile)
  double utilization = 0.0;      // active PEs / D_arch averaged over jobs
  bool local_resident = false;   // input and output fit the local feature buffer
  std::size_t weight_bits_per_pa = 0;
};

struct CycleReport {
  std::vector<LayerCycles> layers;
  std::uint64_t setup_cycles = 0;  // instruction cycles outside layer processing
  std::uint64_t total_cycles = 0;
  double fps = 0.0;
  std::size_t hlt_waits = 0;
  std::size_t branches = 0;
};

struct SimResult {
  std::vector<IntTensor> outputs;   // one per completed frame
  std::vector<CycleReport> frames;  // one per completed frame
  std::uint64_t total_cycles = 0;
  bool overflow = false;            // sticky accumulator saturation flag
  bool halted = false;              // stopped on an unsupported operation
  std::string diagnostic;
  std::size_t instructions = 0;
};

/// Executes a program frame by frame. At every HLT the next image is loaded at
/// feature address 0; when no image is left the run ends. `bank` is indexed by
/// the CONV layer id. Optional line-per-event trace (see docs/formats.md).
SimResult run_program(const isa::Program& program, std::span<const FixedLayer> bank,
                      std::span<const IntTensor> images, const SimConfig& config,
                      std::ostream* trace = nullptr);

/// Convenience: compile, quantize and run a single image.
SimResult simulate_network(const NetworkSpec& net, std::span<const FixedLayer> bank,
                           const IntTensor& image, const SimConfig& config,
                           std::ostream* trace = nullptr);

/// Cycle bookkeeping constants.
inline constexpr std::uint64_t kPipelineStages = 4;  // input register, DSP, QS, AMU

}  // namespace binarray::sim
