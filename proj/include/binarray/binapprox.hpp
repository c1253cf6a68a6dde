#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace binarray {
struct NetworkSpec;
}

namespace binarray::approx {

/// M bit-planes of N_c entries each, packed LSB-first into 64-bit words,
/// plane-major. Bit value 1 stands for +1, 0 for -1.
class BitPlanes {
 public:
  BitPlanes() = default;
  BitPlanes(std::size_t levels, std::size_t n_c);

  std::size_t levels() const noexcept { return levels_; }
  std::size_t n_c() const noexcept { return n_c_; }
  std::size_t words_per_plane() const noexcept { return (n_c_ + 63) / 64; }

  bool bit(std::size_t m, std::size_t i) const {
    return (words_[m * words_per_plane() + i / 64] >> (i % 64)) & 1u;
  }
  int sign(std::size_t m, std::size_t i) const { return bit(m, i) ? 1 : -1; }
  void set(std::size_t m, std::size_t i, bool plus);

  std::span<const std::uint64_t> plane(std::size_t m) const;
  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<std::uint64_t> words() noexcept { return words_; }

  /// Keeps the first `levels` planes.
  BitPlanes truncated(std::size_t levels) const;

  bool operator==(const BitPlanes&) const = default;

 private:
  std::size_t levels_ = 0;
  std::size_t n_c_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Compressed form of one filter: W ~= sum_m B_m * alpha_m (+ bias kept apart).
struct BinaryApprox {
  BitPlanes planes;
  std::vector<double> alphas;
  double residual = 0.0;
  std::optional<double> bias;

  std::size_t levels() const noexcept { return planes.levels(); }
  std::size_t n_c() const noexcept { return planes.n_c(); }

  /// Throws InvalidInput when the stored residual disagrees with the fields.
  void validate(std::span<const double> w) const;
};

struct GreedyResult {
  BitPlanes planes;
  std::vector<double> alpha_estimates;
};

/// Sign/mean deflation: B_m = sign(dW), a_m = mean(|dW|), dW -= B_m a_m.
/// sign(0) is +1.
GreedyResult greedy_binarize(std::span<const double> w, std::size_t levels);

/// Least-squares scaling factors for fixed bit-planes. Rank-deficient
/// designs (repeated planes) get the minimum-norm solution.
std::vector<double> solve_scaling(std::span<const double> w, const BitPlanes& planes);

/// ||w - sum_m B_m alpha_m||^2
double residual(std::span<const double> w, const BitPlanes& planes, std::span<const double> alphas);

BinaryApprox approximate_alg1(std::span<const double> w, std::size_t levels);

struct RefinementResult {
  BinaryApprox approx;
  std::size_t iterations = 0;  // repeat-loop iterations executed
  bool converged = false;      // bit-planes reached a fixed point before the cap
  std::size_t best_iteration = 0;  // 0 means the greedy start was never improved on
};

inline constexpr std::size_t kDefaultRefineIterations = 100;

/// Alternates sign re-assignment under the current alphas with a fresh
/// least-squares solve until the planes stop changing or `max_iters` is hit.
/// Returns the lowest-residual iterate seen, so it never does worse than
/// approximate_alg1.
RefinementResult refine(std::span<const double> w, std::size_t levels,
                        std::size_t max_iters = kDefaultRefineIterations);

BinaryApprox approximate_alg2(std::span<const double> w, std::size_t levels,
                              std::size_t max_iters = kDefaultRefineIterations);

std::vector<double> reconstruct(const BinaryApprox& a);

/// All 2^M signed sums +-a_1 +- ... +- a_M, indexed by the bit pattern
/// (bit m set means +a_m). Duplicates are kept.
std::vector<double> codebook(std::span<const double> alphas);

/// (N_c + 1) * bits_w / (M * (N_c + bits_alpha))
double compression_factor(std::size_t n_c, std::size_t levels, unsigned bits_w = 32,
                          unsigned bits_alpha = 8);

struct CompressionEntry {
  std::string layer;
  std::size_t n_c = 0;
  std::size_t levels = 0;
  std::size_t filters = 0;
  std::uint64_t original_bits = 0;
  std::uint64_t compressed_bits = 0;
  double factor = 0.0;
};

struct CompressionReport {
  std::uint64_t original_bits = 0;
  std::uint64_t compressed_bits = 0;
  double factor = 0.0;
  std::vector<CompressionEntry> per_layer;
};

/// Aggregates filter-wise compression over conv filters, depth-wise channels
/// and dense neurons. `levels_per_layer` overrides the spec's per-layer M when
/// non-empty (one entry per layer).
CompressionReport network_compression(const NetworkSpec& net,
                                      std::span<const std::size_t> levels_per_layer = {},
                                      unsigned bits_w = 32, unsigned bits_alpha = 8);

CompressionReport network_compression(const NetworkSpec& net, std::size_t levels,
                                      unsigned bits_w = 32, unsigned bits_alpha = 8);

}  // namespace binarray::approx
