#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "binarray/arraysim.hpp"
#include "binarray/binapprox.hpp"
#include "binarray/error.hpp"
#include "binarray/fxp.hpp"
#include "binarray/io.hpp"
#include "binarray/isa.hpp"
#include "binarray/network.hpp"
#include "binarray/perfmodel.hpp"
#include "binarray/refnet.hpp"
#include "binarray/weights.hpp"

namespace py = pybind11;
using namespace binarray;
using nlohmann::json;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I32Array = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

IntTensor to_int_tensor(const I32Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return IntTensor(std::move(shape), std::vector<std::int32_t>(a.data(), a.data() + a.size()));
}

I32Array from_int_tensor(const IntTensor& t) {
  I32Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "greedy" || s == "1") return Algorithm::kGreedy;
  if (s == "refined" || s == "2") return Algorithm::kRefined;
  throw InvalidInput("unknown algorithm '" + s + "'");
}

py::dict approx_dict(const approx::BinaryApprox& a) {
  py::array_t<std::int8_t> planes({a.levels(), a.n_c()});
  auto p = planes.mutable_unchecked<2>();
  for (std::size_t m = 0; m < a.levels(); ++m) {
    for (std::size_t i = 0; i < a.n_c(); ++i) p(m, i) = static_cast<std::int8_t>(a.planes.sign(m, i));
  }
  py::dict d;
  d["planes"] = planes;
  d["alphas"] = a.alphas;
  d["residual"] = a.residual;
  return d;
}

py::dict approximate(const F64Array& w, std::size_t levels, const std::string& algorithm, std::size_t max_iters) {
  const Tensor t = to_tensor(w);
  const auto a = parse_algorithm(algorithm) == Algorithm::kGreedy ? approx::approximate_alg1(t.data(), levels)
                                                                   : approx::approximate_alg2(t.data(), levels, max_iters);
  return approx_dict(a);
}

std::string network_compression(const std::string& net_json, std::size_t levels) {
  const NetworkSpec net = parse_network(json::parse(net_json));
  return io::to_json(approx::network_compression(net, levels)).dump();
}

std::string compile(const std::string& net_json, const std::string& config) {
  return isa::compile_network(parse_network(json::parse(net_json)), SimConfig::parse(config)).to_text(true);
}

std::vector<std::uint32_t> assemble(const std::string& text) { return isa::assemble(text).words(); }

std::string estimate(const std::string& net_json, const std::string& config, const std::string& formula,
                     bool offload, double clock_mhz) {
  SimConfig cfg = SimConfig::parse(config);
  cfg.clock_hz = clock_mhz * 1e6;
  perf::EstimateOptions o;
  o.formula = perf::parse_formula(formula);
  o.offload_final_dense = offload;
  return perf::to_json(perf::network_fps(parse_network(json::parse(net_json)), cfg, o)).dump();
}

// Approximates real weights, quantizes them and runs the compiled program on
// already-quantized images. Returns outputs, reference outputs and cycle reports.
py::dict simulate(const std::string& net_json, const std::vector<F64Array>& weights,
                  const std::vector<F64Array>& biases, const std::vector<I32Array>& images, const std::string& config,
                  const std::string& mode, const std::string& algorithm) {
  NetworkSpec net = parse_network(json::parse(net_json));
  net.validate();
  if (weights.size() != net.layers.size()) throw InvalidInput("one weight array per layer is required");
  if (!biases.empty() && biases.size() != net.layers.size()) throw InvalidInput("one bias array per layer is required");
  SimConfig cfg = SimConfig::parse(config);
  cfg.mode = parse_mode(mode);
  std::vector<FixedLayer> fixed;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& l = net.layers[k];
    std::vector<double> b;
    if (!biases.empty()) b = to_tensor(biases[k]).values();
    const ApproxBank bank = approximate_layer(l, to_tensor(weights[k]), b, parse_algorithm(algorithm), l.levels, 100);
    l.alpha_frac = calibrate_alpha_frac(l, bank);
    fixed.push_back(quantize_layer(l, bank));
  }
  std::vector<IntTensor> imgs;
  for (const auto& i : images) imgs.push_back(to_int_tensor(i));

  sim::SimResult r;
  {
    py::gil_scoped_release release;
    r = sim::run_program(isa::compile_network(net, cfg), fixed, imgs, cfg);
  }
  py::list outputs, reference, frames;
  const std::size_t cap = cfg.mode == Mode::kHighThroughput ? cfg.m_arch : 0;
  for (std::size_t f = 0; f < r.outputs.size(); ++f) {
    outputs.append(from_int_tensor(r.outputs[f]));
    reference.append(from_int_tensor(ref::infer_fixed(net, fixed, imgs[f], cap).output));
    frames.append(io::to_json(r.frames[f]).dump());
  }
  py::dict d;
  d["outputs"] = outputs;
  d["reference"] = reference;
  d["frames"] = frames;
  d["total_cycles"] = r.total_cycles;
  d["overflow"] = r.overflow;
  d["halted"] = r.halted;
  d["diagnostic"] = r.diagnostic;
  d["network"] = to_json(net).dump();
  return d;
}

I32Array quantize_image(const F64Array& x, int frac) {
  return from_int_tensor(ref::quantize_image(to_tensor(x), fxp::QFormat::activation(frac)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-level binary weight approximation and systolic array simulation";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<CompileError>(m, "CompileError", PyExc_ValueError);
  py::register_exception<AssembleError>(m, "AssembleError", PyExc_ValueError);

  m.def("approximate", &approximate, py::arg("w"), py::arg("levels"), py::arg("algorithm") = "refined",
        py::arg("max_iters") = 100);
  m.def("compression_factor", &approx::compression_factor, py::arg("n_c"), py::arg("levels"),
        py::arg("bits_w") = 32, py::arg("bits_alpha") = 8);
  m.def("_network_compression", &network_compression);
  m.def(
      "quantize", [](double x, int frac) { return fxp::quantize(x, fxp::QFormat::activation(frac)).raw; },
      py::arg("x"), py::arg("frac"));
  m.def(
      "requantize",
      [](std::int64_t acc, int shift) {
        return fxp::requantize({acc, fxp::QFormat::accumulator(shift)}, fxp::QFormat::activation(0), shift).raw;
      },
      py::arg("acc"), py::arg("shift"));
  m.def("quantize_image", &quantize_image, py::arg("x"), py::arg("frac") = 7);
  m.def("assemble", &assemble, py::arg("text"));
  m.def(
      "disassemble", [](const std::vector<std::uint32_t>& w) { return isa::disassemble(w); }, py::arg("words"));
  m.def("_compile", &compile);
  m.def("_estimate", &estimate);
  m.def("_simulate", &simulate);
}
