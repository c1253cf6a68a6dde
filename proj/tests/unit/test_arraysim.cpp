#include <random>
#include <sstream>

#include "binarray/arraysim.hpp"
#include "binarray/error.hpp"
#include "binarray/perfmodel.hpp"
#include "binarray/refnet.hpp"
#include "commands.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace binarray;
using namespace binarray::sim;

TEST_CASE("processing element") {
  PEState s;
  s = pe_step(s, 7, false);
  CHECK(s.accumulator == -7);
  PEState t;
  const std::int32_t xs[] = {1, 2, 3};
  const bool bs[] = {true, false, true};
  for (int i = 0; i < 3; ++i) t = pe_step(t, xs[i], bs[i]);
  CHECK(t.accumulator == 2);
  t = pe_drain(t);
  CHECK(t.output == 2);
  CHECK(t.accumulator == 0);
}

TEST_CASE("processing array cascade") {
  const std::vector<std::int64_t> p = {4};
  const std::vector<fxp::FxValue> a = {{2, fxp::QFormat::activation(0)}};
  CHECK(pa_output(p, a, {1, fxp::QFormat::accumulator(0)}).value.raw == 9);
  const std::vector<fxp::FxValue> unit = {{1, fxp::QFormat::activation(0)}};
  CHECK(pa_output(std::vector<std::int64_t>{-37}, unit, {0, fxp::QFormat::accumulator(0)}).value.raw == -37);
}

TEST_CASE("activation and max-pool unit") {
  Amu relu(4, 1);
  for (int v : {-3, -1, -4}) CHECK_FALSE(relu.push(v));
  CHECK(relu.push(-2).value() == std::vector<std::int32_t>{0});

  Amu two(4, 2);
  const int stream[] = {5, -1, -2, -1, 7, -1, 1, -1};
  std::optional<std::vector<std::int32_t>> out;
  for (int v : stream) out = two.push(v);
  CHECK(out.value() == std::vector<std::int32_t>{7, 0});

  Amu pass(1, 1);
  CHECK(pass.push(-5).value() == std::vector<std::int32_t>{0});
  CHECK(pass.push(6).value() == std::vector<std::int32_t>{6});

  Amu linear(1, 1, false);
  CHECK(linear.push(-5).value() == std::vector<std::int32_t>{-5});
}

TEST_CASE("address generator order") {
  ConvGeometry g;
  g.in_width = g.in_height = 6;
  g.kernel_width = g.kernel_height = 3;
  g.pool_width = g.pool_height = 2;
  CHECK(agu_sequence(g) == std::vector<std::size_t>{0, 1, 6, 7, 2, 3, 8, 9, 12, 13, 18, 19, 14, 15, 20, 21});
  g.pool_width = g.pool_height = 1;
  CHECK(agu_sequence(g) == std::vector<std::size_t>{0, 1, 2, 3, 6, 7, 8, 9, 12, 13, 14, 15, 18, 19, 20, 21});
  g.pool_width = 3;
  CHECK_THROWS_AS(agu_sequence(g), ConfigError);
}

TEST_CASE("address generator with stride and padding") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 300; ++t) {
    ConvGeometry g;
    g.in_width = 3 + rng() % 10;
    g.in_height = 3 + rng() % 10;
    g.kernel_width = 1 + rng() % 3;
    g.kernel_height = 1 + rng() % 3;
    g.padding = rng() % 2;
    g.stride = 1 + rng() % 2;
    g.pool_width = 1 + rng() % 3;
    g.pool_height = 1 + rng() % 3;
    try {
      g.validate();
    } catch (const ConfigError&) {
      continue;
    }
    CHECK(agu_sequence(g) == oracle::anchor_order(g.in_width, g.in_height, g.kernel_width, g.kernel_height,
                                                  g.pool_width, g.pool_height, g.stride, g.padding));
  }
}

TEST_CASE("address generator state stays in range") {
  ConvGeometry g;
  g.in_width = 9;
  g.in_height = 7;
  g.kernel_width = 2;
  g.kernel_height = 2;
  g.pool_width = 2;
  g.pool_height = 3;
  Agu agu(g);
  std::size_t n = 1;
  do {
    CHECK(agu.state().p_w < g.pool_width);
    CHECK(agu.state().p_h < g.pool_height);
    CHECK(agu.anchor() < g.in_width * g.in_height);
  } while (agu.next() && ++n);
  CHECK(n == g.anchors());
}

TEST_CASE("output gatherer is a bijection") {
  CHECK(odg_address(0, 0, 5, 4) == 0);
  CHECK(odg_address(0, 1, 5, 4) == 20);
  std::vector<int> hit(3 * 20, 0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t a = 0; a < 20; ++a) ++hit[odg_address(a, c, 5, 4)];
  }
  CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
}

TEST_CASE("identity 1x1 layer reproduces the quantized input") {
  NetworkSpec net;
  net.in_width = 4;
  net.in_height = 3;
  net.in_channels = 1;
  LayerSpec l;
  l.name = "id";
  l.levels = 1;
  l.activation = Activation::kNone;
  l.out_format = fxp::QFormat::activation(7);
  l.alpha_frac = 0;
  net.layers.push_back(l);
  net.chain();
  approx::BinaryApprox a{approx::BitPlanes(1, 1), {1.0}, 0.0, 0.0};
  a.planes.set(0, 0, true);
  const std::vector<FixedLayer> fixed{quantize_layer(net.layers[0], std::vector{a})};
  const IntTensor img({1, 3, 4}, {-128, -5, 0, 1, 2, 3, 4, 5, 100, 127, -1, 9});
  const auto r = simulate_network(net, fixed, img, SimConfig{});
  REQUIRE(r.outputs.size() == 1);
  CHECK(r.outputs[0].values() == img.values());
}

TEST_CASE("simulator equals the fixed-point reference on random networks") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const auto w = cli::random_workload(cli::random_network(rng), 2, rng());
    SimConfig cfg;
    cfg.n_sa = 1 + rng() % 3;
    cfg.d_arch = 1 + rng() % 8;
    cfg.m_arch = 2;
    cfg.mode = rng() % 2 ? Mode::kHighAccuracy : Mode::kHighThroughput;
    const isa::Program p = isa::compile_network(w.net, cfg);
    const auto r = run_program(p, w.fixed, w.images, cfg);
    REQUIRE(r.outputs.size() == 2);
    const std::size_t cap = cfg.mode == Mode::kHighThroughput ? cfg.m_arch : 0;
    for (std::size_t i = 0; i < 2; ++i) CHECK(r.outputs[i] == ref::infer_fixed(w.net, w.fixed, w.images[i], cap).output);
  }
}

TEST_CASE("one HLT wait and one branch per frame") {
  std::mt19937_64 rng(5);
  const auto w = cli::random_workload(cli::random_network(rng), 3, 1);
  const auto r = run_program(isa::compile_network(w.net, SimConfig{}), w.fixed, w.images, SimConfig{});
  REQUIRE(r.frames.size() == 3);
  for (const auto& f : r.frames) {
    CHECK(f.hlt_waits == 1);
    CHECK(f.branches == 1);
    std::uint64_t sum = f.setup_cycles;
    for (const auto& l : f.layers) sum += l.cycles;
    CHECK(f.total_cycles == sum);
  }
  CHECK(r.frames[1].total_cycles == r.frames[2].total_cycles);
}

TEST_CASE("unsupported layer kind halts with a diagnostic") {
  const isa::Program p = isa::assemble("STI r1 KIND=7\nHLT\nCONV 0 LAST\nBRA 1");
  const IntTensor img({1, 1, 1});
  const auto r = run_program(p, {}, std::span<const IntTensor>(&img, 1), SimConfig{});
  CHECK(r.halted);
  CHECK(r.diagnostic.find("unsupported") != std::string::npos);
}

TEST_CASE("stale registers and overflow are traced") {
  std::mt19937_64 rng(8);
  const auto w = cli::random_workload(cli::random_network(rng), 1, 2);
  std::ostringstream trace;
  run_program(isa::compile_network(w.net, SimConfig{}), w.fixed, w.images, SimConfig{}, &trace);
  CHECK(trace.str().find("\nS ") == std::string::npos);
  CHECK(trace.str().find("\nF ") != std::string::npos);

  isa::Program p = isa::compile_network(w.net, SimConfig{});
  p.code.erase(p.code.begin());  // drop W_I of the first layer
  std::ostringstream t2;
  run_program(p, w.fixed, w.images, SimConfig{}, &t2);
  CHECK(t2.str().find("S 17 W_I") != std::string::npos);
}

TEST_CASE("program without HLT hits the instruction cap") {
  std::mt19937_64 rng(12);
  const auto w = cli::random_workload(cli::random_network(rng), 1, 3);
  isa::Program p = isa::compile_network(w.net, SimConfig{});
  p.code.erase(std::remove_if(p.code.begin(), p.code.end(), [](const isa::Instruction& i) { return i.op == isa::Opcode::kHlt; }),
               p.code.end());
  p.comments.resize(p.code.size());
  const auto r = run_program(p, w.fixed, w.images, SimConfig{});
  CHECK(r.halted);
}

TEST_CASE("weight storage per processing array") {
  std::mt19937_64 rng(14);
  const auto w = cli::random_workload(cli::random_network(rng), 1, 4);
  SimConfig cfg;
  cfg.d_arch = 16;
  const auto r = simulate_network(w.net, w.fixed, w.images[0], cfg);
  REQUIRE(r.frames.size() == 1);
  for (std::size_t k = 0; k < w.net.layers.size(); ++k) {
    CHECK(r.frames[0].layers[k].weight_bits_per_pa == w.net.layers[k].coeffs_per_filter() * 16);
  }
}

TEST_CASE("simulated cycles never undercut the model") {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 30; ++t) {
    const auto w = cli::random_workload(cli::random_network(rng), 1, rng());
    SimConfig cfg;
    cfg.d_arch = 1 + rng() % 8;
    const auto r = simulate_network(w.net, w.fixed, w.images[0], cfg);
    for (std::size_t k = 0; k < w.net.layers.size(); ++k) {
      CHECK(r.frames[0].layers[k].cycles >= perf::layer_cycles(cfg, w.net.layers[k]));
    }
  }
}
