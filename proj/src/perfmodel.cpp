#include "binarray/perfmodel.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "binarray/error.hpp"

namespace binarray::perf {

std::string_view formula_name(CycleFormula f) {
  switch (f) {
    case CycleFormula::kOutputDims: return "output";
    case CycleFormula::kInputDims: return "input";
    case CycleFormula::kLiteral: return "literal";
  }
  return "output";
}

CycleFormula parse_formula(std::string_view text) {
  if (text == "output") return CycleFormula::kOutputDims;
  if (text == "input") return CycleFormula::kInputDims;
  if (text == "literal") return CycleFormula::kLiteral;
  throw ConfigError("unknown cycle formula '" + std::string(text) + "' (output, input, literal)");
}

namespace {

std::size_t d_eff(const SimConfig& c, const LayerSpec& l) {
  return l.kind == LayerKind::kDepthwise ? 1 : c.d_arch;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void require_supported(const LayerSpec& l) {
  if (l.kind == LayerKind::kUnsupported) {
    throw ConfigError("layer '" + l.name + "': unsupported layer kind '" + l.kind_text + "'");
  }
}

}  // namespace

OutputDims output_dims(const LayerSpec& l, CycleFormula f) {
  require_supported(l);
  OutputDims o;
  o.d = l.out_channels;
  if (l.kind == LayerKind::kDense) {
    o.u = o.v = 1;
    return o;
  }
  o.u = l.out_width();
  if (f != CycleFormula::kLiteral) {
    o.v = l.out_height();
    return o;
  }
  // As printed: the vertical extent subtracts the pooling height.
  const std::size_t padded = l.in_height + 2 * l.padding;
  if (l.pool_height > padded || (padded - l.pool_height) % l.stride != 0) {
    throw ConfigError("layer '" + l.name + "': literal V is not a positive integer");
  }
  o.v = (padded - l.pool_height) / l.stride + 1;
  return o;
}

Rational logical_arrays(const SimConfig& config, std::size_t levels) {
  config.validate();
  if (levels == 0) throw ConfigError("M must be at least 1");
  const auto chunks = static_cast<std::int64_t>(ceil_div(levels, config.m_arch));
  return {static_cast<std::int64_t>(config.n_sa), chunks};
}

std::size_t tiles(const SimConfig& config, const LayerSpec& layer, Rational n_lsa) {
  const auto groups = static_cast<std::int64_t>(ceil_div(layer.out_channels, d_eff(config, layer)));
  std::int64_t nt = (n_lsa / Rational(groups)).floor();
  // W_I / N_T > 1 and H_I / N_T > 1.
  const auto cap = static_cast<std::int64_t>(std::min(layer.in_width, layer.in_height)) - 1;
  nt = std::min(nt, cap);
  return static_cast<std::size_t>(std::max<std::int64_t>(nt, 1));
}

std::size_t passes(const SimConfig& config, const LayerSpec& layer, Rational n_lsa) {
  const Rational r = Rational(static_cast<std::int64_t>(layer.out_channels)) /
                     (Rational(static_cast<std::int64_t>(d_eff(config, layer))) * n_lsa);
  return static_cast<std::size_t>(std::max<std::int64_t>(1, r.ceil()));
}

std::uint64_t layer_macs(const LayerSpec& l) {
  require_supported(l);
  const OutputDims o = output_dims(l);
  return std::uint64_t{o.u} * o.v * o.d * l.coeffs_per_filter();
}

double utilization(const SimConfig& config, const LayerSpec& l) {
  config.validate();
  if (l.kind == LayerKind::kDepthwise) return 1.0 / static_cast<double>(config.d_arch);
  const std::size_t groups = ceil_div(l.out_channels, config.d_arch);
  double sum = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t active = std::min(config.d_arch, l.out_channels - g * config.d_arch);
    sum += static_cast<double>(active) / static_cast<double>(config.d_arch);
  }
  return sum / static_cast<double>(groups);
}

std::vector<double> utilization(const SimConfig& config, const NetworkSpec& net) {
  std::vector<double> u;
  for (const auto& l : net.layers) u.push_back(utilization(config, l));
  return u;
}

LayerCost layer_cost(const SimConfig& config, const LayerSpec& l, CycleFormula f) {
  require_supported(l);
  const std::size_t m_eff = config.effective_levels(l.levels);
  LayerCost c;
  c.name = l.name;
  const OutputDims o = output_dims(l, f);
  c.u = o.u;
  c.v = o.v;
  c.d = o.d;
  c.n_lsa = logical_arrays(config, m_eff);
  c.n_tiles = tiles(config, l, c.n_lsa);
  c.n_pass = passes(config, l, c.n_lsa);
  std::uint64_t work = 0;
  switch (f) {
    case CycleFormula::kOutputDims: work = std::uint64_t{o.u} * o.v * l.coeffs_per_filter(); break;
    case CycleFormula::kInputDims: work = std::uint64_t{l.in_width} * l.in_height * l.coeffs_per_filter(); break;
    case CycleFormula::kLiteral:
      work = std::uint64_t{l.in_width} * l.in_height * l.in_channels * l.kernel_width * l.in_height;
      break;
  }
  c.cycles = ceil_div(work * c.n_pass, c.n_tiles);
  c.macs = layer_macs(l);
  c.utilization = utilization(config, l);
  return c;
}

std::uint64_t layer_cycles(const SimConfig& config, const LayerSpec& layer, CycleFormula f) {
  return layer_cost(config, layer, f).cycles;
}

double cpu_fps(const NetworkSpec& net, double gops) {
  if (!(gops > 0.0)) throw ConfigError("CPU throughput must be positive");
  std::uint64_t macs = 0;
  for (const auto& l : net.layers) macs += layer_macs(l);
  return gops * 1e9 / static_cast<double>(macs);
}

NetworkEstimate network_fps(const NetworkSpec& net, const SimConfig& config, const EstimateOptions& options) {
  config.validate();
  NetworkEstimate e;
  e.network = net.name;
  e.config = config.label();
  e.clock_hz = config.clock_hz;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& l = net.layers[k];
    const bool off = options.offload_final_dense && k + 1 == net.layers.size() && l.kind == LayerKind::kDense;
    e.layers.push_back(layer_cost(config, l, options.formula));
    e.offloaded.push_back(off);
    e.macs += e.layers.back().macs;
    if (!off) e.total_cycles += e.layers.back().cycles;
  }
  e.fps = e.total_cycles ? config.clock_hz / static_cast<double>(e.total_cycles) : 0.0;
  e.cpu_fps = cpu_fps(net, options.cpu_gops);
  return e;
}

nlohmann::json to_json(const NetworkEstimate& e) {
  nlohmann::json j;
  j["network"] = e.network;
  j["config"] = e.config;
  j["clock_hz"] = e.clock_hz;
  j["total_cycles"] = e.total_cycles;
  j["fps"] = e.fps;
  j["macs"] = e.macs;
  j["cpu_fps"] = e.cpu_fps;
  j["layers"] = nlohmann::json::array();
  for (std::size_t k = 0; k < e.layers.size(); ++k) {
    const LayerCost& c = e.layers[k];
    j["layers"].push_back({{"name", c.name},
                           {"u", c.u},
                           {"v", c.v},
                           {"d", c.d},
                           {"n_lsa", c.n_lsa.to_string()},
                           {"n_tiles", c.n_tiles},
                           {"n_pass", c.n_pass},
                           {"cycles", c.cycles},
                           {"macs", c.macs},
                           {"utilization", c.utilization},
                           {"offloaded", static_cast<bool>(e.offloaded[k])}});
  }
  return j;
}

std::string to_text(const NetworkEstimate& e) {
  std::ostringstream out;
  char buf[160];
  out << e.network << ' ' << e.config << '\n';
  std::snprintf(buf, sizeof buf, "%-10s %5s %5s %5s %6s %4s %6s %12s %7s\n", "layer", "U", "V", "D", "N_LSA", "N_T",
                "N_pass", "cycles", "util");
  out << buf;
  for (std::size_t k = 0; k < e.layers.size(); ++k) {
    const LayerCost& c = e.layers[k];
    std::snprintf(buf, sizeof buf, "%-10s %5zu %5zu %5zu %6s %4zu %6zu %12llu %6.1f%%%s\n", c.name.c_str(), c.u, c.v,
                  c.d, c.n_lsa.to_string().c_str(), c.n_tiles, c.n_pass, static_cast<unsigned long long>(c.cycles),
                  100.0 * c.utilization, e.offloaded[k] ? " (cpu)" : "");
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "total %llu cycles, %.2f FPS at %.0f MHz; CPU %.2f FPS (%llu MACs)\n",
                static_cast<unsigned long long>(e.total_cycles), e.fps, e.clock_hz / 1e6, e.cpu_fps,
                static_cast<unsigned long long>(e.macs));
  out << buf;
  return out.str();
}

}  // namespace binarray::perf
