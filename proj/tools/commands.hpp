#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "binarray/config.hpp"
#include "binarray/network.hpp"
#include "binarray/tensor.hpp"
#include "binarray/weights.hpp"

namespace binarray::cli {

namespace fs = std::filesystem;

/// Everything one end-to-end run needs. Relative paths resolve against the
/// manifest's directory.
struct RunManifest {
  fs::path network;
  fs::path weights;  // directory of <layer>.bank files
  std::vector<fs::path> images;
  std::string config = "1x8x2";
  Mode mode = Mode::kHighThroughput;
  fs::path out;
  std::uint64_t seed = 1;

  static RunManifest load(const fs::path& path);
  /// Throws ConfigError naming the first referenced path that does not exist.
  void check_paths() const;
};

struct SynthOptions {
  fs::path network;
  fs::path out;
  std::size_t images = 1;
  std::uint64_t seed = 1;
};

struct ApproximateOptions {
  fs::path network;
  fs::path weights;  // directory of <layer>.w.bin (+ optional <layer>.b.bin)
  fs::path out;
  std::vector<std::size_t> levels;  // empty: from the spec; one entry: all layers; else per layer
  Algorithm alg = Algorithm::kRefined;
  std::size_t iters = 100;
  std::optional<fs::path> json;
};

struct CompileOptions {
  fs::path network;
  std::string config = "1x8x2";
  std::optional<fs::path> out;  // writes <out>.s and <out>.bin
};

struct SimulateOptions {
  RunManifest run;
  std::optional<fs::path> program;
  std::optional<fs::path> trace;
  std::optional<fs::path> json;
  double clock_hz = 400e6;
  bool check = false;
};

struct EstimateOptions {
  fs::path network;
  std::vector<std::string> configs;
  std::optional<fs::path> sweep;
  double clock_hz = 400e6;
  Mode mode = Mode::kHighThroughput;
  std::string formula = "output";
  bool offload = false;
  double cpu_gops = 1.0;
  std::optional<fs::path> json;  // "-" for stdout
};

struct VerifyOptions {
  std::optional<fs::path> manifest;
  bool quick = false;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthOptions& o, std::ostream& out);
int cmd_approximate(const ApproximateOptions& o, std::ostream& out);
int cmd_compile(const CompileOptions& o, std::ostream& out);
int cmd_simulate(const SimulateOptions& o, std::ostream& out);
int cmd_estimate(const EstimateOptions& o, std::ostream& out);
int cmd_verify(const VerifyOptions& o, std::ostream& out);

/// Seeded Gaussian weights for a layer in the layout approximate_layer expects.
Tensor random_weights(const LayerSpec& l, std::mt19937_64& rng);
/// Uniform image in [-1, 1) of the network's input shape.
Tensor random_image(const NetworkSpec& net, std::mt19937_64& rng);

/// Approximated and quantized weights plus matching images for a network.
struct Workload {
  NetworkSpec net;
  std::vector<ApproxBank> banks;
  std::vector<FixedLayer> fixed;
  std::vector<IntTensor> images;
};
Workload random_workload(NetworkSpec net, std::size_t n_images, std::uint64_t seed,
                         Algorithm alg = Algorithm::kGreedy);

/// Small random network (1-3 layers, dims <= 16, D <= 8) drawn from `rng`.
NetworkSpec random_network(std::mt19937_64& rng);

}  // namespace binarray::cli
