#include <random>

#include "binarray/binapprox.hpp"
#include "binarray/error.hpp"
#include "binarray/network.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace binarray;
using namespace binarray::approx;

namespace {

std::vector<std::vector<int>> signs_of(const BitPlanes& p) {
  std::vector<std::vector<int>> s(p.levels(), std::vector<int>(p.n_c()));
  for (std::size_t m = 0; m < p.levels(); ++m) {
    for (std::size_t i = 0; i < p.n_c(); ++i) s[m][i] = p.sign(m, i);
  }
  return s;
}

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> w(n);
  for (double& x : w) x = nd(rng);
  return w;
}

}  // namespace

TEST_CASE("greedy binarization of a symmetric pair") {
  const std::vector<double> w = {0.5, -0.5};
  const auto g = greedy_binarize(w, 1);
  CHECK(g.planes.sign(0, 0) == 1);
  CHECK(g.planes.sign(0, 1) == -1);
  CHECK(g.alpha_estimates[0] == doctest::Approx(0.5));
}

TEST_CASE("greedy binarization of a two-level ramp") {
  const std::vector<double> w = {3, 1, -1, -3};
  const auto g = greedy_binarize(w, 2);
  CHECK(signs_of(g.planes) == std::vector<std::vector<int>>{{1, 1, -1, -1}, {1, -1, 1, -1}});
  CHECK(g.alpha_estimates[0] == doctest::Approx(2.0));
  CHECK(g.alpha_estimates[1] == doctest::Approx(1.0));
}

TEST_CASE("sign of zero is plus one") {
  const std::vector<double> w = {0.0, 0.0, 1.0};
  const auto g = greedy_binarize(w, 1);
  CHECK(g.planes.sign(0, 0) == 1);
  CHECK(g.planes.sign(0, 1) == 1);
}

TEST_CASE("constant tensor is represented exactly") {
  const std::vector<double> w = {0.7, 0.7, 0.7};
  const auto a = approximate_alg1(w, 1);
  CHECK(signs_of(a.planes) == std::vector<std::vector<int>>{{1, 1, 1}});
  CHECK(a.alphas[0] == doctest::Approx(0.7));
  CHECK(a.residual < 1e-24);
}

TEST_CASE("empty tensor is rejected") {
  const std::vector<double> w;
  CHECK_THROWS_AS(greedy_binarize(w, 1), InvalidInput);
  const std::vector<double> one = {1.0};
  CHECK_THROWS_AS(greedy_binarize(one, 0), InvalidInput);
}

TEST_CASE("scaling factors on an orthogonal design") {
  const std::vector<double> w = {3, 1, -1, -3};
  BitPlanes p(2, 4);
  const int s[2][4] = {{1, 1, -1, -1}, {1, -1, 1, -1}};
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t i = 0; i < 4; ++i) p.set(m, i, s[m][i] > 0);
  }
  const auto a = solve_scaling(w, p);
  CHECK(a[0] == doctest::Approx(2.0));
  CHECK(a[1] == doctest::Approx(1.0));

  const std::vector<double> ones = {1, 1, 1, 1};
  BitPlanes all(1, 4);
  for (std::size_t i = 0; i < 4; ++i) all.set(0, i, true);
  CHECK(solve_scaling(ones, all)[0] == doctest::Approx(1.0));
}

TEST_CASE("duplicated planes give the minimum-norm solution") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto w = gaussian(rng, 9);
    BitPlanes p(2, 9);
    for (std::size_t i = 0; i < 9; ++i) {
      const bool b = (rng() & 1) != 0;
      p.set(0, i, b);
      p.set(1, i, b);
    }
    const auto a = solve_scaling(w, p);
    const auto o = oracle::pinv_solve(w, signs_of(p));
    CHECK(a[0] == doctest::Approx(a[1]).epsilon(1e-9));
    CHECK(a[0] == doctest::Approx(o[0]).epsilon(1e-6));
    CHECK(a[1] == doctest::Approx(o[1]).epsilon(1e-6));
  }
}

TEST_CASE("least squares matches the pseudo-inverse oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 8 + rng() % 60, m = 1 + rng() % 4;
    const auto w = gaussian(rng, n);
    const auto g = greedy_binarize(w, m);
    const auto a = solve_scaling(w, g.planes);
    const auto o = oracle::pinv_solve(w, signs_of(g.planes));
    const double ja = oracle::sq_error(w, signs_of(g.planes), a);
    const double jo = oracle::sq_error(w, signs_of(g.planes), o);
    CHECK(ja <= jo + 1e-9 * (1 + jo));
  }
}

TEST_CASE("scaling factors are locally optimal") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto w = gaussian(rng, 27);
    const auto a = approximate_alg1(w, 3);
    const auto s = signs_of(a.planes);
    const double j0 = oracle::sq_error(w, s, a.alphas);
    for (std::size_t m = 0; m < a.alphas.size(); ++m) {
      for (const double dir : {-1.0, 1.0}) {
        auto pert = a.alphas;
        pert[m] += dir * (1e-3 * std::abs(pert[m]) + 1e-6);
        CHECK(oracle::sq_error(w, s, pert) >= j0 - 1e-12);
      }
    }
  }
}

TEST_CASE("dimension mismatch in scaling is rejected") {
  const std::vector<double> w = {1, 2, 3};
  CHECK_THROWS_AS(solve_scaling(w, BitPlanes(1, 4)), InvalidInput);
}

TEST_CASE("greedy approximation is exact on the ramp") {
  const std::vector<double> w = {3, 1, -1, -3};
  const auto a = approximate_alg1(w, 2);
  CHECK(a.alphas[0] == doctest::Approx(2.0));
  CHECK(a.alphas[1] == doctest::Approx(1.0));
  CHECK(a.residual < 1e-12);
  const std::vector<double> pair = {0.25, -0.25};
  CHECK(approximate_alg1(pair, 1).residual < 1e-24);
}

TEST_CASE("refinement leaves an optimal greedy result unchanged") {
  const std::vector<double> w = {3, 1, -1, -3};
  const auto r = refine(w, 2);
  const auto a1 = approximate_alg1(w, 2);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.approx.planes == a1.planes);
  CHECK(r.approx.alphas[0] == doctest::Approx(a1.alphas[0]));
  CHECK(r.approx.alphas[1] == doctest::Approx(a1.alphas[1]));
}

TEST_CASE("refinement never does worse and respects the iteration cap") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto w = gaussian(rng, 27);
    const std::size_t cap = 1 + rng() % 5;
    const auto r = refine(w, 2, cap);
    CHECK(r.iterations <= cap);
    CHECK(r.approx.residual <= approximate_alg1(w, 2).residual + 1e-12);
  }
}

TEST_CASE("stored residual matches a recomputation") {
  std::mt19937_64 rng(8);
  const auto w = gaussian(rng, 64);
  const auto a = approximate_alg2(w, 3);
  const auto s = signs_of(a.planes);
  CHECK(a.residual == doctest::Approx(oracle::sq_error(w, s, a.alphas)).epsilon(1e-9));
  CHECK_NOTHROW(a.validate(w));
  auto bad = a;
  bad.residual += 1.0;
  CHECK_THROWS_AS(bad.validate(w), InvalidInput);
}

TEST_CASE("greedy residual does not grow with more levels") {
  std::mt19937_64 rng(13);
  const auto w = gaussian(rng, 64);
  double prev = approximate_alg1(w, 1).residual;
  for (std::size_t m = 2; m <= 6; ++m) {
    const double r = approximate_alg1(w, m).residual;
    CHECK(r <= prev + 1e-12);
    prev = r;
  }
}

TEST_CASE("reconstruction and codebook") {
  BitPlanes p(2, 4);
  const int s[2][4] = {{1, 1, -1, -1}, {1, -1, 1, -1}};
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t i = 0; i < 4; ++i) p.set(m, i, s[m][i] > 0);
  }
  BinaryApprox a{p, {2.0, 1.0}, 0.0, std::nullopt};
  CHECK(reconstruct(a) == std::vector<double>{3, 1, -1, -3});

  BinaryApprox zero{BitPlanes(1, 3), {0.0}, 0.0, std::nullopt};
  CHECK(reconstruct(zero) == std::vector<double>{0, 0, 0});

  auto cb = codebook(std::vector<double>{2.0, 1.0});
  std::sort(cb.begin(), cb.end());
  CHECK(cb == std::vector<double>{-3, -1, 1, 3});
  auto one = codebook(std::vector<double>{0.5});
  std::sort(one.begin(), one.end());
  CHECK(one == std::vector<double>{-0.5, 0.5});
}

TEST_CASE("reconstructed weights lie in the codebook") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const auto w = gaussian(rng, 30);
    const auto a = approximate_alg2(w, 1 + rng() % 4);
    const auto cb = codebook(a.alphas);
    for (const double v : reconstruct(a)) {
      const bool found = std::any_of(cb.begin(), cb.end(), [&](double c) { return std::abs(c - v) < 1e-12; });
      CHECK(found);
    }
  }
}

TEST_CASE("approximation is deterministic") {
  std::mt19937_64 rng(19);
  const auto w = gaussian(rng, 80);
  const auto a = approximate_alg2(w, 3);
  const auto b = approximate_alg2(w, 3);
  CHECK(a.planes == b.planes);
  CHECK(a.alphas == b.alphas);
  CHECK(a.residual == b.residual);
}

TEST_CASE("compression factor arithmetic") {
  CHECK(compression_factor(147, 2) == doctest::Approx(4736.0 / 310.0));
  CHECK(compression_factor(1000000, 2) == doctest::Approx(16.0).epsilon(1e-3));
  CHECK(compression_factor(1000000, 4) == doctest::Approx(8.0).epsilon(1e-3));
  CHECK_THROWS_AS(compression_factor(0, 2), InvalidInput);
}

TEST_CASE("single-filter network compression equals the filter factor") {
  NetworkSpec net;
  net.in_width = net.in_height = 3;
  net.in_channels = 2;
  LayerSpec l;
  l.name = "only";
  l.kernel_width = l.kernel_height = 3;
  l.out_channels = 1;
  net.layers.push_back(l);
  net.chain();
  const auto rep = network_compression(net, std::size_t{2});
  CHECK(rep.factor == doctest::Approx(compression_factor(18, 2)));
  CHECK(rep.per_layer.size() == 1);
  CHECK(rep.factor == doctest::Approx(static_cast<double>(rep.original_bits) / rep.compressed_bits));
}
