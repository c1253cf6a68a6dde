#include "binarray/binapprox.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "binarray/error.hpp"
#include "binarray/network.hpp"

namespace binarray::approx {

BitPlanes::BitPlanes(std::size_t levels, std::size_t n_c)
    : levels_(levels), n_c_(n_c), words_(levels * ((n_c + 63) / 64), 0) {}

void BitPlanes::set(std::size_t m, std::size_t i, bool plus) {
  std::uint64_t& w = words_[m * words_per_plane() + i / 64];
  const std::uint64_t mask = std::uint64_t{1} << (i % 64);
  w = plus ? (w | mask) : (w & ~mask);
}

std::span<const std::uint64_t> BitPlanes::plane(std::size_t m) const {
  return std::span<const std::uint64_t>(words_).subspan(m * words_per_plane(), words_per_plane());
}

BitPlanes BitPlanes::truncated(std::size_t levels) const {
  if (levels > levels_) throw InvalidInput("cannot truncate bit-planes to more levels");
  BitPlanes out(levels, n_c_);
  std::copy_n(words_.begin(), levels * words_per_plane(), out.words_.begin());
  return out;
}

namespace {

void require_nonempty(std::span<const double> w) {
  if (w.empty()) throw InvalidInput("weight tensor is empty");
  for (const double v : w) {
    if (!std::isfinite(v)) throw InvalidInput("weight tensor contains a non-finite value");
  }
}

void require_levels(std::size_t levels) {
  if (levels == 0) throw InvalidInput("number of bit-planes must be at least 1");
}

// Fills plane m with sign(dw) (sign(0) = +1) and deflates dw by plane * alpha.
void assign_plane(std::vector<double>& dw, BitPlanes& planes, std::size_t m, double alpha) {
  for (std::size_t i = 0; i < dw.size(); ++i) {
    const bool plus = dw[i] >= 0.0;
    planes.set(m, i, plus);
    dw[i] -= plus ? alpha : -alpha;
  }
}

}  // namespace

GreedyResult greedy_binarize(std::span<const double> w, std::size_t levels) {
  require_nonempty(w);
  require_levels(levels);
  GreedyResult r{BitPlanes(levels, w.size()), {}};
  r.alpha_estimates.reserve(levels);
  std::vector<double> dw(w.begin(), w.end());
  for (std::size_t m = 0; m < levels; ++m) {
    // mean(dW .* sign(dW)) == mean(|dW|)
    double sum = 0.0;
    for (const double v : dw) sum += std::abs(v);
    const double alpha = sum / static_cast<double>(dw.size());
    assign_plane(dw, r.planes, m, alpha);
    r.alpha_estimates.push_back(alpha);
  }
  return r;
}

std::vector<double> solve_scaling(std::span<const double> w, const BitPlanes& planes) {
  require_nonempty(w);
  require_levels(planes.levels());
  if (planes.n_c() != w.size()) {
    throw InvalidInput("bit-plane length " + std::to_string(planes.n_c()) +
                       " does not match weight count " + std::to_string(w.size()));
  }
  const auto n = static_cast<Eigen::Index>(w.size());
  const auto m = static_cast<Eigen::Index>(planes.levels());
  Eigen::MatrixXd b(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      b(i, j) = planes.sign(static_cast<std::size_t>(j), static_cast<std::size_t>(i));
    }
  }
  const Eigen::Map<const Eigen::VectorXd> rhs(w.data(), n);
  // Complete orthogonal decomposition gives the minimum-norm solution when
  // columns repeat.
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(b);
  const Eigen::VectorXd alpha = cod.solve(rhs);
  return {alpha.data(), alpha.data() + alpha.size()};
}

double residual(std::span<const double> w, const BitPlanes& planes, std::span<const double> alphas) {
  if (planes.n_c() != w.size() || planes.levels() != alphas.size()) {
    throw InvalidInput("residual: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double approx = 0.0;
    for (std::size_t m = 0; m < alphas.size(); ++m) approx += planes.sign(m, i) * alphas[m];
    const double e = w[i] - approx;
    acc += e * e;
  }
  return acc;
}

void BinaryApprox::validate(std::span<const double> w) const {
  if (alphas.size() != planes.levels()) throw InvalidInput("alpha count does not match bit-plane count");
  for (const double a : alphas) {
    if (!std::isfinite(a)) throw InvalidInput("non-finite alpha");
  }
  const double r = approx::residual(w, planes, alphas);
  const double scale = std::max({std::abs(r), std::abs(residual), 1e-300});
  if (std::abs(r - residual) > 1e-9 * scale && std::abs(r - residual) > 1e-12) {
    throw InvalidInput("stored residual does not match the reconstruction");
  }
}

BinaryApprox approximate_alg1(std::span<const double> w, std::size_t levels) {
  GreedyResult g = greedy_binarize(w, levels);
  BinaryApprox a;
  a.alphas = solve_scaling(w, g.planes);
  a.planes = std::move(g.planes);
  a.residual = residual(w, a.planes, a.alphas);
  return a;
}

RefinementResult refine(std::span<const double> w, std::size_t levels, std::size_t max_iters) {
  if (max_iters == 0) throw InvalidInput("iteration cap K must be at least 1");
  RefinementResult out;
  out.approx = approximate_alg1(w, levels);

  BitPlanes planes = out.approx.planes;
  std::vector<double> alphas = out.approx.alphas;
  std::vector<double> dw(w.size());
  while (out.iterations < max_iters) {
    ++out.iterations;
    const BitPlanes previous = planes;
    std::copy(w.begin(), w.end(), dw.begin());
    for (std::size_t m = 0; m < levels; ++m) assign_plane(dw, planes, m, alphas[m]);
    alphas = solve_scaling(w, planes);
    const double r = residual(w, planes, alphas);
    if (r < out.approx.residual) {
      out.approx.planes = planes;
      out.approx.alphas = alphas;
      out.approx.residual = r;
      out.best_iteration = out.iterations;
    }
    if (planes == previous) {
      out.converged = true;
      break;
    }
  }
  return out;
}

BinaryApprox approximate_alg2(std::span<const double> w, std::size_t levels, std::size_t max_iters) {
  return refine(w, levels, max_iters).approx;
}

std::vector<double> reconstruct(const BinaryApprox& a) {
  if (a.alphas.size() != a.planes.levels()) throw InvalidInput("alpha count does not match bit-plane count");
  std::vector<double> out(a.n_c(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t m = 0; m < a.alphas.size(); ++m) out[i] += a.planes.sign(m, i) * a.alphas[m];
  }
  return out;
}

std::vector<double> codebook(std::span<const double> alphas) {
  if (alphas.empty()) throw InvalidInput("codebook needs at least one alpha");
  if (alphas.size() > 30) throw InvalidInput("codebook size 2^M too large");
  const std::size_t n = std::size_t{1} << alphas.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t code = 0; code < n; ++code) {
    for (std::size_t m = 0; m < alphas.size(); ++m) out[code] += ((code >> m) & 1u) ? alphas[m] : -alphas[m];
  }
  return out;
}

double compression_factor(std::size_t n_c, std::size_t levels, unsigned bits_w, unsigned bits_alpha) {
  if (n_c == 0 || levels == 0 || bits_w == 0 || bits_alpha == 0) {
    throw InvalidInput("compression_factor arguments must be >= 1");
  }
  return static_cast<double>(n_c + 1) * bits_w /
         (static_cast<double>(levels) * static_cast<double>(n_c + bits_alpha));
}

CompressionReport network_compression(const NetworkSpec& net, std::span<const std::size_t> levels_per_layer,
                                      unsigned bits_w, unsigned bits_alpha) {
  if (!levels_per_layer.empty() && levels_per_layer.size() != net.layers.size()) {
    throw InvalidInput("per-layer M list has " + std::to_string(levels_per_layer.size()) +
                       " entries for " + std::to_string(net.layers.size()) + " layers");
  }
  CompressionReport r;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& l = net.layers[k];
    if (l.kind == LayerKind::kUnsupported) continue;
    CompressionEntry e;
    e.layer = l.name;
    e.n_c = l.coeffs_per_filter();
    e.levels = levels_per_layer.empty() ? l.levels : levels_per_layer[k];
    if (e.levels == 0) throw InvalidInput("layer '" + l.name + "': M must be at least 1");
    e.filters = l.out_channels;
    // One bias per filter at full precision; M planes of N_c bits plus one alpha each.
    e.original_bits = static_cast<std::uint64_t>(e.filters) * (e.n_c + 1) * bits_w;
    e.compressed_bits = static_cast<std::uint64_t>(e.filters) * e.levels * (e.n_c + bits_alpha);
    e.factor = static_cast<double>(e.original_bits) / static_cast<double>(e.compressed_bits);
    r.original_bits += e.original_bits;
    r.compressed_bits += e.compressed_bits;
    r.per_layer.push_back(std::move(e));
  }
  if (r.compressed_bits == 0) throw InvalidInput("network has no approximable layers");
  r.factor = static_cast<double>(r.original_bits) / static_cast<double>(r.compressed_bits);
  return r;
}

CompressionReport network_compression(const NetworkSpec& net, std::size_t levels, unsigned bits_w,
                                      unsigned bits_alpha) {
  const std::vector<std::size_t> per_layer(net.layers.size(), levels);
  return network_compression(net, per_layer, bits_w, bits_alpha);
}

}  // namespace binarray::approx
