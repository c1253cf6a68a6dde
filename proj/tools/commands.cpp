#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "binarray/arraysim.hpp"
#include "binarray/binapprox.hpp"
#include "binarray/error.hpp"
#include "binarray/io.hpp"
#include "binarray/isa.hpp"
#include "binarray/perfmodel.hpp"
#include "binarray/refnet.hpp"
#include "json.hpp"

namespace binarray::cli {

using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() || p.empty() ? p : base / p; }

fs::path bank_path(const fs::path& dir, const LayerSpec& l) { return dir / (l.name + ".bank"); }

std::vector<ApproxBank> load_banks(const NetworkSpec& net, const fs::path& dir) {
  std::vector<ApproxBank> banks;
  for (const auto& l : net.layers) banks.push_back(io::read_bank(bank_path(dir, l)));
  return banks;
}

IntTensor load_image(const NetworkSpec& net, const fs::path& path) {
  // Integer containers hold raw activations, real ones are quantized here.
  if (io::tensor_dtype(path) != io::DType::kF64) {
    IntTensor t = io::read_int_tensor(path);
    if (t.size() != net.input_size()) {
      throw InvalidInput(path.string() + ": image has " + std::to_string(t.size()) + " values, network expects " +
                         std::to_string(net.input_size()));
    }
    return t;
  }
  const Tensor t = io::read_tensor(path);
  if (t.size() != net.input_size()) {
    throw InvalidInput(path.string() + ": image has " + std::to_string(t.size()) + " values, network expects " +
                       std::to_string(net.input_size()));
  }
  return ref::quantize_image(t, net.input_format);
}

void emit_json(const json& j, const std::optional<fs::path>& dest, std::ostream& out) {
  if (!dest) return;
  if (*dest == "-") {
    out << j.dump(2) << '\n';
  } else {
    io::write_text(*dest, j.dump(2) + "\n");
  }
}

std::size_t level_cap(const SimConfig& c) { return c.mode == Mode::kHighThroughput ? c.m_arch : 0; }

}  // namespace

RunManifest RunManifest::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  RunManifest m;
  try {
    m.network = resolve(base, j.at("network").get<std::string>());
    m.weights = resolve(base, j.at("weights").get<std::string>());
    for (const auto& img : j.value("images", json::array())) m.images.push_back(resolve(base, img.get<std::string>()));
    m.config = j.value("config", m.config);
    m.mode = parse_mode(j.value("mode", std::string(mode_name(m.mode))));
    m.out = resolve(base, j.value("out", std::string("out")));
    m.seed = j.value("seed", m.seed);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

void RunManifest::check_paths() const {
  if (!fs::exists(network)) throw ConfigError("network file " + network.string() + " does not exist");
  if (!fs::is_directory(weights)) throw ConfigError("weights directory " + weights.string() + " does not exist");
  for (const auto& i : images) {
    if (!fs::exists(i)) throw ConfigError("image " + i.string() + " does not exist");
  }
}

Tensor random_weights(const LayerSpec& l, std::mt19937_64& rng) {
  const std::size_t n_c = l.coeffs_per_filter();
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(n_c)));
  std::vector<double> v(l.out_channels * n_c);
  for (double& x : v) x = nd(rng);
  switch (l.kind) {
    case LayerKind::kConv: return Tensor({l.out_channels, l.in_channels, l.kernel_height, l.kernel_width}, v);
    case LayerKind::kDepthwise: return Tensor({l.out_channels, 1, l.kernel_height, l.kernel_width}, v);
    default: return Tensor({l.out_channels, n_c}, v);
  }
}

Tensor random_image(const NetworkSpec& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  std::vector<double> v(net.input_size());
  for (double& x : v) x = ud(rng);
  return Tensor({net.in_channels, net.in_height, net.in_width}, v);
}

Workload random_workload(NetworkSpec net, std::size_t n_images, std::uint64_t seed, Algorithm alg) {
  std::mt19937_64 rng(seed);
  Workload w;
  for (auto& l : net.layers) {
    const Tensor weights = random_weights(l, rng);
    std::normal_distribution<double> nb(0.0, 0.1);
    std::vector<double> bias(l.out_channels);
    for (double& b : bias) b = nb(rng);
    ApproxBank bank = approximate_layer(l, weights, bias, alg, l.levels, 20);
    l.alpha_frac = calibrate_alpha_frac(l, bank);
    w.fixed.push_back(quantize_layer(l, bank));
    w.banks.push_back(std::move(bank));
  }
  for (std::size_t i = 0; i < n_images; ++i) {
    w.images.push_back(ref::quantize_image(random_image(net, rng), net.input_format));
  }
  w.net = std::move(net);
  return w;
}

NetworkSpec random_network(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  NetworkSpec net;
  net.name = "random";
  net.in_width = pick(4, 16);
  net.in_height = pick(4, 16);
  net.in_channels = pick(1, 4);
  net.input_format = fxp::QFormat::activation(7);
  std::size_t w = net.in_width, h = net.in_height, c = net.in_channels;
  const std::size_t n_layers = pick(1, 3);
  for (std::size_t k = 0; k < n_layers; ++k) {
    LayerSpec l;
    l.name = "l" + std::to_string(k);
    const bool last = k + 1 == n_layers;
    const std::size_t roll = pick(0, 9);
    if ((last && roll < 3) || (w < 2 && h < 2)) {
      l.kind = LayerKind::kDense;
      l.out_channels = pick(1, 8);
    } else {
      l.kind = roll < 5 ? LayerKind::kConv : (roll < 7 ? LayerKind::kDepthwise : LayerKind::kConv);
      l.padding = pick(0, 1);
      l.kernel_width = pick(1, std::min<std::size_t>(4, w + 2 * l.padding));
      l.kernel_height = pick(1, std::min<std::size_t>(4, h + 2 * l.padding));
      l.stride = pick(1, 2);
      if ((w + 2 * l.padding - l.kernel_width) % l.stride != 0 ||
          (h + 2 * l.padding - l.kernel_height) % l.stride != 0) {
        l.stride = 1;
      }
      l.out_channels = l.kind == LayerKind::kDepthwise ? c : pick(1, 8);
      const std::size_t u = (w + 2 * l.padding - l.kernel_width) / l.stride + 1;
      const std::size_t v = (h + 2 * l.padding - l.kernel_height) / l.stride + 1;
      auto pool_for = [&](std::size_t n) {
        std::vector<std::size_t> ok;
        for (std::size_t p = 1; p <= 3; ++p) {
          if (n % p == 0) ok.push_back(p);
        }
        return ok[pick(0, ok.size() - 1)];
      };
      l.pool_width = pool_for(u);
      l.pool_height = pool_for(v);
      w = u / l.pool_width;
      h = v / l.pool_height;
    }
    l.kind_text = std::string(layer_kind_name(l.kind));
    l.levels = pick(1, 4);
    l.activation = pick(0, 3) == 0 ? Activation::kNone : Activation::kRelu;
    l.out_format = fxp::QFormat::activation(static_cast<int>(pick(2, 6)));
    c = l.out_channels;
    if (l.kind == LayerKind::kDense) w = h = 1;
    net.layers.push_back(l);
    if (l.kind == LayerKind::kDense) break;
  }
  net.chain();
  net.validate();
  return net;
}

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  const NetworkSpec net = load_network(o.network);
  net.validate();
  fs::create_directories(o.out);
  std::mt19937_64 rng(o.seed);
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::kUnsupported) continue;
    io::write_tensor(o.out / (l.name + ".w.bin"), random_weights(l, rng));
    std::normal_distribution<double> nb(0.0, 0.1);
    std::vector<double> bias(l.out_channels);
    for (double& b : bias) b = nb(rng);
    io::write_tensor(o.out / (l.name + ".b.bin"), Tensor({l.out_channels}, bias));
  }
  for (std::size_t i = 0; i < o.images; ++i) {
    io::write_tensor(o.out / ("image" + std::to_string(i) + ".bin"), random_image(net, rng));
  }
  out << "wrote weights for " << net.layers.size() << " layers and " << o.images << " images to " << o.out.string()
      << '\n';
  return 0;
}

int cmd_approximate(const ApproximateOptions& o, std::ostream& out) {
  NetworkSpec net = load_network(o.network);
  if (!o.levels.empty()) {
    if (o.levels.size() != 1 && o.levels.size() != net.layers.size()) {
      throw ConfigError("--levels takes one value or one per layer (" + std::to_string(net.layers.size()) + ")");
    }
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      net.layers[k].levels = o.levels.size() == 1 ? o.levels[0] : o.levels[k];
    }
  }
  net.validate();
  fs::create_directories(o.out);
  for (auto& l : net.layers) {
    const Tensor w = io::read_tensor(o.weights / (l.name + ".w.bin"));
    std::vector<double> bias;
    if (const fs::path bp = o.weights / (l.name + ".b.bin"); fs::exists(bp)) bias = io::read_tensor(bp).values();
    const ApproxBank bank = approximate_layer(l, w, bias, o.alg, l.levels, o.iters);
    l.alpha_frac = calibrate_alpha_frac(l, bank);
    io::write_bank(bank_path(o.out, l), bank);
    double res = 0.0;
    for (const auto& a : bank) res += a.residual;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s M=%zu N_c=%-5zu filters=%-4zu residual=%.6g alpha_frac=%d\n",
                  l.name.c_str(), l.levels, l.coeffs_per_filter(), bank.size(), res, l.alpha_frac);
    out << buf;
  }
  save_network(net, o.out / "network.json");
  const approx::CompressionReport rep = approx::network_compression(net);
  char buf[160];
  std::snprintf(buf, sizeof buf, "compression factor %.2f (%llu -> %llu bits)\n", rep.factor,
                static_cast<unsigned long long>(rep.original_bits),
                static_cast<unsigned long long>(rep.compressed_bits));
  out << buf;
  io::write_text(o.out / "compression.json", io::to_json(rep).dump(2) + "\n");
  emit_json(io::to_json(rep), o.json, out);
  return 0;
}

int cmd_compile(const CompileOptions& o, std::ostream& out) {
  const NetworkSpec net = load_network(o.network);
  const isa::Program p = isa::compile_network(net, SimConfig::parse(o.config));
  if (o.out) {
    fs::path s = *o.out, b = *o.out;
    s += ".s";
    b += ".bin";
    io::write_program(s, p);
    io::write_program(b, p);
    out << "wrote " << s.string() << " and " << b.string() << " (" << p.code.size() << " instructions)\n";
  } else {
    out << p.to_text(true);
  }
  return 0;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  const RunManifest& m = o.run;
  m.check_paths();
  if (m.images.empty()) throw ConfigError("no images given");
  const NetworkSpec net = load_network(m.network);
  SimConfig cfg = SimConfig::parse(m.config);
  cfg.mode = m.mode;
  cfg.clock_hz = o.clock_hz;
  const auto banks = load_banks(net, m.weights);
  const auto fixed = quantize_network(net, banks);
  std::vector<IntTensor> images;
  for (const auto& p : m.images) images.push_back(load_image(net, p));
  const isa::Program prog = o.program ? io::read_program(*o.program) : isa::compile_network(net, cfg);

  std::ofstream trace_file;
  if (o.trace) {
    trace_file.open(*o.trace);
    if (!trace_file) throw FormatError("cannot write trace " + o.trace->string());
  }
  const sim::SimResult r = sim::run_program(prog, fixed, images, cfg, o.trace ? &trace_file : nullptr);

  int status = 0;
  if (r.halted) {
    out << "halted: " << r.diagnostic << '\n';
    status = 1;
  }
  if (!m.out.empty()) fs::create_directories(m.out);
  json frames = json::array();
  for (std::size_t f = 0; f < r.outputs.size(); ++f) {
    const std::string stem = m.images[f].stem().string();
    if (!m.out.empty()) io::write_tensor(m.out / (stem + ".out.bin"), r.outputs[f]);
    const auto& rep = r.frames[f];
    char buf[160];
    std::snprintf(buf, sizeof buf, "frame %zu (%s): %llu cycles, %.2f FPS at %.0f MHz\n", f, stem.c_str(),
                  static_cast<unsigned long long>(rep.total_cycles), rep.fps, cfg.clock_hz / 1e6);
    out << buf;
    for (const auto& lc : rep.layers) {
      std::snprintf(buf, sizeof buf, "  layer %zu: %llu cycles (%zu jobs, %zu rounds, %zu tiles, %zu chunks)\n",
                    lc.layer, static_cast<unsigned long long>(lc.cycles), lc.jobs, lc.rounds, lc.tiles,
                    lc.level_chunks);
      out << buf;
    }
    json fj = io::to_json(rep);
    fj["image"] = m.images[f].string();
    if (o.check) {
      const auto ref = ref::infer_fixed(net, fixed, images[f], level_cap(cfg));
      const bool same = ref.output == r.outputs[f];
      fj["matches_reference"] = same;
      out << "  reference: " << (same ? "match" : "MISMATCH") << '\n';
      if (!same) status = 1;
    }
    frames.push_back(std::move(fj));
  }
  if (r.overflow) out << "warning: accumulator saturated\n";
  json j = {{"config", cfg.label()},        {"mode", mode_name(cfg.mode)}, {"frames", frames},
            {"total_cycles", r.total_cycles}, {"overflow", r.overflow},    {"halted", r.halted},
            {"diagnostic", r.diagnostic}};
  if (!m.out.empty()) io::write_text(m.out / "cycles.json", j.dump(2) + "\n");
  emit_json(j, o.json, out);
  return status;
}

int cmd_estimate(const EstimateOptions& o, std::ostream& out) {
  const NetworkSpec net = load_network(o.network);
  net.validate();
  std::vector<std::string> configs = o.configs;
  if (o.sweep) {
    const std::string text = io::read_text(*o.sweep);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw FormatError(o.sweep->string() + ": " + e.what());
    }
    for (const auto& t : j) {
      const auto v = t.get<std::vector<std::size_t>>();
      if (v.size() != 3) throw FormatError(o.sweep->string() + ": entries are [N_SA, D_arch, M_arch]");
      configs.push_back(std::to_string(v[0]) + "x" + std::to_string(v[1]) + "x" + std::to_string(v[2]));
    }
  }
  if (configs.empty()) configs = {"1x8x2", "1x32x2"};
  perf::EstimateOptions eo;
  eo.formula = perf::parse_formula(o.formula);
  eo.offload_final_dense = o.offload;
  eo.cpu_gops = o.cpu_gops;
  json rows = json::array();
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-12s %12s %10s\n", "config", "cycles", "FPS");
  std::string table = buf;
  double cpu = 0.0;
  for (const auto& c : configs) {
    SimConfig cfg = SimConfig::parse(c);
    cfg.clock_hz = o.clock_hz;
    cfg.mode = o.mode;
    const perf::NetworkEstimate e = perf::network_fps(net, cfg, eo);
    out << perf::to_text(e) << '\n';
    std::snprintf(buf, sizeof buf, "%-12s %12llu %10.2f\n", e.config.c_str(),
                  static_cast<unsigned long long>(e.total_cycles), e.fps);
    table += buf;
    rows.push_back(perf::to_json(e));
    cpu = e.cpu_fps;
  }
  std::snprintf(buf, sizeof buf, "%-12s %12s %10.2f\n", "cpu", "-", cpu);
  table += buf;
  out << table;
  emit_json({{"network", net.name}, {"estimates", rows}, {"cpu_fps", cpu}, {"cpu_gops", o.cpu_gops}}, o.json, out);
  return 0;
}

namespace {

// Anchor order spelled out directly: pooling windows row-major, anchors
// inside a window row-major, addresses in the padded frame.
std::vector<std::size_t> enumerate_anchors(const sim::ConvGeometry& g) {
  std::vector<std::size_t> seq;
  const std::size_t u = g.out_width(), v = g.out_height(), wp = g.padded_width();
  for (std::size_t py = 0; py < v / g.pool_height; ++py) {
    for (std::size_t px = 0; px < u / g.pool_width; ++px) {
      for (std::size_t dy = 0; dy < g.pool_height; ++dy) {
        for (std::size_t dx = 0; dx < g.pool_width; ++dx) {
          const std::size_t y = py * g.pool_height + dy, x = px * g.pool_width + dx;
          seq.push_back(y * g.stride * wp + x * g.stride);
        }
      }
    }
  }
  return seq;
}

struct Suite {
  std::ostream& out;
  int failures = 0;
  void report(const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << '\n';
    failures += ok ? 0 : 1;
  }
};

}  // namespace

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  Suite s{out};
  std::uint64_t seed = o.seed;

  if (o.manifest) {
    RunManifest m;
    NetworkSpec net;
    std::vector<ApproxBank> banks;
    std::vector<IntTensor> images;
    bool loaded = false;
    try {
      m = RunManifest::load(*o.manifest);
      seed = m.seed;
      m.check_paths();
      net = load_network(m.network);
      net.validate();
      banks = load_banks(net, m.weights);
      for (const auto& p : m.images) images.push_back(load_image(net, p));
      loaded = true;
      s.report("files", true, std::to_string(net.layers.size()) + " banks, " + std::to_string(images.size()) + " images");
    } catch (const Error& e) {
      s.report("files", false, e.what());
    }
    if (loaded) {
      try {
        SimConfig cfg = SimConfig::parse(m.config);
        cfg.mode = m.mode;
        const auto fixed = quantize_network(net, banks);
        std::size_t same = 0;
        for (const auto& img : images) {
          const auto r = sim::simulate_network(net, fixed, img, cfg);
          const auto ref = ref::infer_fixed(net, fixed, img, level_cap(cfg));
          same += !r.halted && r.outputs.size() == 1 && r.outputs[0] == ref.output;
        }
        s.report("bit-exact", same == images.size(), std::to_string(same) + "/" + std::to_string(images.size()));
        const auto prog = isa::compile_network(net, cfg);
        const auto words = prog.words();
        s.report("isa-roundtrip", isa::assemble(isa::disassemble(words)).words() == words,
                 std::to_string(words.size()) + " words");
      } catch (const Error& e) {
        s.report("bit-exact", false, e.what());
      }
    }
  }

  {
    std::mt19937_64 rng(seed);
    const std::size_t nets = o.quick ? 5 : 50;
    std::size_t same = 0, total = 0;
    for (std::size_t k = 0; k < nets; ++k) {
      const Workload w = random_workload(random_network(rng), 2, rng());
      SimConfig cfg;
      cfg.d_arch = 1 + rng() % 8;
      cfg.m_arch = 2 + rng() % 2;
      cfg.n_sa = 1 + rng() % 4;
      cfg.mode = Mode::kHighThroughput;
      for (const auto& img : w.images) {
        const auto r = sim::simulate_network(w.net, w.fixed, img, cfg);
        const auto ref = ref::infer_fixed(w.net, w.fixed, img, level_cap(cfg));
        same += !r.halted && r.outputs.size() == 1 && r.outputs[0] == ref.output;
        ++total;
      }
    }
    s.report("random-nets", same == total, std::to_string(same) + "/" + std::to_string(total) + " images bit-exact");
  }

  {
    const std::size_t hi = o.quick ? 8 : 12, kmax = o.quick ? 3 : 4, pmax = o.quick ? 2 : 3;
    std::size_t cases = 0, bad = 0;
    for (std::size_t wi = 4; wi <= hi; ++wi) {
      for (std::size_t hi_ = 4; hi_ <= hi; ++hi_) {
        for (std::size_t kb = 1; kb <= kmax; ++kb) {
          for (std::size_t pw = 1; pw <= pmax; ++pw) {
            for (std::size_t ph = 1; ph <= pmax; ++ph) {
              sim::ConvGeometry g;
              g.in_width = wi;
              g.in_height = hi_;
              g.kernel_width = g.kernel_height = kb;
              g.pool_width = pw;
              g.pool_height = ph;
              if (g.out_width() % pw != 0 || g.out_height() % ph != 0) continue;
              ++cases;
              bad += sim::agu_sequence(g) != enumerate_anchors(g);
            }
          }
        }
      }
    }
    s.report("agu-sweep", bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " geometries");
  }

  out << (s.failures == 0 ? "all checks passed" : std::to_string(s.failures) + " check(s) failed") << '\n';
  return s.failures == 0 ? 0 : 1;
}

}  // namespace binarray::cli
