#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "binarray/config.hpp"
#include "binarray/network.hpp"
#include "binarray/rational.hpp"
#include "json.hpp"

/// Analytical throughput model.
///
/// Paradigms: one accumulation per PE per clock, alpha multiplications hidden
/// behind accumulation, tiling only over width/height, no input stalls.
namespace binarray::perf {

/// Which reading of the cycle formula to evaluate.
///  kOutputDims: U*V*N_c*N_pass/N_T (default).
///  kInputDims:  W_I*H_I*N_c*N_pass/N_T (input extent instead of the output grid).
///  kLiteral:    W_I*H_I*C_I*W_B*H_I*N_pass/N_T with V from H_I-H_P.
enum class CycleFormula { kOutputDims, kInputDims, kLiteral };

std::string_view formula_name(CycleFormula f);
CycleFormula parse_formula(std::string_view text);

struct OutputDims {
  std::size_t u = 0;
  std::size_t v = 0;
  std::size_t d = 0;
};

/// Throws ConfigError when a dimension is not a positive integer.
OutputDims output_dims(const LayerSpec& layer, CycleFormula f = CycleFormula::kOutputDims);

/// N_SA / ceil(M / M_arch), exact.
Rational logical_arrays(const SimConfig& config, std::size_t levels);

/// floor(N_LSA / ceil(D / D_arch)) clamped to >= 1 and to W_I/N_T > 1, H_I/N_T > 1.
std::size_t tiles(const SimConfig& config, const LayerSpec& layer, Rational n_lsa);

/// ceil(max(1, D / (D_arch * N_LSA))); depth-wise layers use D_arch = 1.
std::size_t passes(const SimConfig& config, const LayerSpec& layer, Rational n_lsa);

struct LayerCost {
  std::string name;
  std::size_t u = 0, v = 0, d = 0;
  Rational n_lsa;
  std::size_t n_tiles = 1;
  std::size_t n_pass = 1;
  std::uint64_t cycles = 0;
  std::uint64_t macs = 0;
  double utilization = 0.0;
};

LayerCost layer_cost(const SimConfig& config, const LayerSpec& layer,
                     CycleFormula f = CycleFormula::kOutputDims);

std::uint64_t layer_cycles(const SimConfig& config, const LayerSpec& layer,
                           CycleFormula f = CycleFormula::kOutputDims);

/// Multiply-accumulates of the full-precision layer.
std::uint64_t layer_macs(const LayerSpec& layer);

/// Active-PE fraction: min(D_remaining, D_arch) / D_arch averaged over channel
/// groups; 1/D_arch for depth-wise layers.
double utilization(const SimConfig& config, const LayerSpec& layer);
std::vector<double> utilization(const SimConfig& config, const NetworkSpec& net);

struct EstimateOptions {
  CycleFormula formula = CycleFormula::kOutputDims;
  bool offload_final_dense = false;  // trailing dense layers run on the host CPU
  double cpu_gops = 1.0;             // reference processor, one MAC per op
};

struct NetworkEstimate {
  std::string network;
  std::string config;
  std::vector<LayerCost> layers;
  std::vector<bool> offloaded;
  std::uint64_t total_cycles = 0;  // accelerated layers only
  double clock_hz = 0.0;
  double fps = 0.0;
  std::uint64_t macs = 0;  // whole network
  double cpu_fps = 0.0;
};

NetworkEstimate network_fps(const NetworkSpec& net, const SimConfig& config,
                            const EstimateOptions& options = {});

double cpu_fps(const NetworkSpec& net, double gops = 1.0);

nlohmann::json to_json(const NetworkEstimate& e);
/// Aligned-column table, one row per layer plus totals.
std::string to_text(const NetworkEstimate& e);

}  // namespace binarray::perf
