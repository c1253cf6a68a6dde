#include "binarray/arraysim.hpp"

#include <algorithm>
#include <array>
#include <ostream>

#include "binarray/error.hpp"
#include "binarray/perfmodel.hpp"

namespace binarray::sim {

PEState pe_step(PEState s, std::int32_t x, bool b) {
  s.accumulator += b ? x : -x;
  ++s.bit_index;
  return s;
}

PEState pe_drain(PEState s) {
  s.output = s.accumulator;
  s.accumulator = 0;
  s.bit_index = 0;
  return s;
}

fxp::MacResult pa_output(std::span<const std::int64_t> partials, std::span<const fxp::FxValue> alphas,
                         fxp::FxValue bias_or_prev) {
  if (partials.size() != alphas.size()) throw InvalidInput("one alpha per PA required");
  fxp::MacResult r{bias_or_prev, false};
  for (std::size_t m = 0; m < partials.size(); ++m) {
    const fxp::MacResult step = fxp::fx_mul_add(partials[m], alphas[m], r.value);
    r.value = step.value;
    r.overflow |= step.overflow;
  }
  return r;
}

Amu::Amu(std::size_t pool_size, std::size_t channels, bool relu)
    : pool_size_(pool_size),
      reset_value_(relu ? 0 : static_cast<std::int32_t>(fxp::QFormat::activation(0).min_raw())),
      regs_(channels) {
  if (pool_size == 0 || channels == 0) throw InvalidInput("AMU needs a pooling size and channels");
  reset();
}

void Amu::reset() { std::fill(regs_.begin(), regs_.end(), reset_value_); }

std::optional<std::vector<std::int32_t>> Amu::push(std::int32_t value) {
  regs_[head_] = std::max(regs_[head_], value);
  if (++head_ < regs_.size()) return std::nullopt;
  head_ = 0;
  if (++rounds_ < pool_size_) return std::nullopt;
  rounds_ = 0;
  std::vector<std::int32_t> out = regs_;
  reset();
  return out;
}

ConvGeometry ConvGeometry::from_layer(const LayerSpec& l) {
  ConvGeometry g;
  if (l.kind == LayerKind::kDense) return g;
  g.in_width = l.in_width;
  g.in_height = l.in_height;
  g.kernel_width = l.kernel_width;
  g.kernel_height = l.kernel_height;
  g.stride = l.stride;
  g.padding = l.padding;
  g.pool_width = l.pool_width;
  g.pool_height = l.pool_height;
  return g;
}

namespace {

std::size_t extent(std::size_t in, std::size_t pad, std::size_t kernel, std::size_t stride, const char* axis) {
  const std::size_t padded = in + 2 * pad;
  if (stride == 0 || kernel == 0 || in == 0) throw ConfigError(std::string("zero-sized ") + axis + " geometry");
  if (kernel > padded) throw ConfigError(std::string("kernel ") + axis + " exceeds the padded input");
  if ((padded - kernel) % stride != 0) throw ConfigError(std::string("output ") + axis + " is not an integer");
  return (padded - kernel) / stride + 1;
}

}  // namespace

std::size_t ConvGeometry::out_width() const { return extent(in_width, padding, kernel_width, stride, "width"); }
std::size_t ConvGeometry::out_height() const {
  return extent(in_height, padding, kernel_height, stride, "height");
}

void ConvGeometry::validate() const {
  const std::size_t u = out_width(), v = out_height();
  if (pool_width == 0 || pool_height == 0 || u % pool_width != 0 || v % pool_height != 0) {
    throw ConfigError("pooling " + std::to_string(pool_width) + "x" + std::to_string(pool_height) +
                      " does not divide the " + std::to_string(u) + "x" + std::to_string(v) + " output");
  }
}

Agu::Agu(const ConvGeometry& g) : g_(g) {
  g_.validate();
  total_ = g_.anchors();
  step_col_ = g_.stride;
  step_row_ = g_.stride * g_.padded_width();
  step_pool_ = g_.pool_width * g_.stride;
  step_pool_row_ = g_.pool_height * g_.stride * g_.padded_width();
  last_pool_col_ = g_.out_width() - g_.pool_width;
}

bool Agu::next() {
  if (done()) return false;
  if (++s_.emitted >= total_) return false;
  if (s_.p_w + 1 < g_.pool_width) {
    ++s_.p_w;
    s_.a_cv += step_col_;
  } else if (s_.p_h + 1 < g_.pool_height) {
    s_.p_w = 0;
    ++s_.p_h;
    s_.a_cl += step_row_;
    s_.a_cv = s_.a_cl;
  } else if (s_.i_cl < last_pool_col_) {
    s_.p_w = s_.p_h = 0;
    s_.i_cl += g_.pool_width;
    s_.a_po += step_pool_;
    s_.a_cl = s_.a_cv = s_.a_po;
  } else {
    s_.p_w = s_.p_h = 0;
    s_.i_cl = 0;
    s_.a_pr += step_pool_row_;
    s_.a_po = s_.a_cl = s_.a_cv = s_.a_pr;
  }
  return true;
}

std::vector<std::size_t> agu_sequence(const ConvGeometry& g) {
  Agu agu(g);
  std::vector<std::size_t> seq;
  seq.reserve(g.anchors());
  do {
    seq.push_back(agu.anchor());
  } while (agu.next());
  return seq;
}

std::size_t odg_address(std::size_t arrival, std::size_t channel, std::size_t pooled_width,
                        std::size_t pooled_height) {
  return channel * pooled_width * pooled_height + arrival;
}

namespace {

using isa::Opcode;
using isa::Param;

constexpr std::size_t kParamSlots = 256;

struct Registers {
  std::array<std::uint16_t, kParamSlots> value{};
  std::array<bool, kParamSlots> fresh{};
  std::uint16_t get(Param p) const { return value[static_cast<std::uint8_t>(p)]; }
};

struct Halt {
  std::string message;
};

// Layer description decoded from the configuration registers.
struct DecodedLayer {
  LayerSpec spec;
  int shift = 0;
  std::size_t in_base = 0;
  std::size_t out_base = 0;
};

DecodedLayer decode_registers(const Registers& r, std::uint8_t id) {
  DecodedLayer d;
  LayerSpec& l = d.spec;
  l.name = "layer" + std::to_string(id);
  switch (r.get(Param::kKind)) {
    case 0: l.kind = LayerKind::kConv; break;
    case 1: l.kind = LayerKind::kDense; break;
    case 2: l.kind = LayerKind::kDepthwise; break;
    default:
      throw Halt{"CONV " + std::to_string(id) + ": unsupported layer kind " + std::to_string(r.get(Param::kKind)) +
                 ", offload to host"};
  }
  l.kind_text = std::string(layer_kind_name(l.kind));
  l.in_width = r.get(Param::kInWidth);
  l.in_height = r.get(Param::kInHeight);
  l.in_channels = r.get(Param::kInChannels);
  l.padding = r.get(Param::kPadding);
  l.stride = r.get(Param::kStride);
  l.kernel_width = r.get(Param::kKernelWidth);
  l.kernel_height = r.get(Param::kKernelHeight);
  l.out_channels = r.get(Param::kFilters);
  l.levels = r.get(Param::kLevels);
  l.pool_width = r.get(Param::kPoolWidth);
  l.pool_height = r.get(Param::kPoolHeight);
  l.activation = r.get(Param::kRelu) ? Activation::kRelu : Activation::kNone;
  d.shift = r.get(Param::kShift);
  d.in_base = std::size_t{r.get(Param::kInBase)} * isa::kBufferUnit;
  d.out_base = std::size_t{r.get(Param::kOutBase)} * isa::kBufferUnit;
  if (l.kind == LayerKind::kDense) {
    l.in_channels = l.in_width * l.in_height * l.in_channels;
    l.in_width = l.in_height = 1;
  }
  if (d.shift > fxp::kMaxShift) throw Halt{"CONV " + std::to_string(id) + ": shift " + std::to_string(d.shift) + " > 27"};
  try {
    l.validate();
  } catch (const ConfigError& e) {
    throw Halt{"CONV " + std::to_string(id) + ": " + e.what()};
  }
  return d;
}

class Machine {
 public:
  Machine(std::span<const FixedLayer> bank, const SimConfig& config, std::ostream* trace)
      : bank_(bank), config_(config), trace_(trace), mem_(config.feature_memory_bytes, 0) {}

  void load_image(const IntTensor& image) {
    if (image.size() > mem_.size()) throw InvalidInput("image does not fit the feature memory");
    for (std::size_t i = 0; i < image.size(); ++i) {
      if (!fxp::QFormat::activation(0).contains(image[i])) {
        throw InvalidInput("image value " + std::to_string(image[i]) + " at index " + std::to_string(i) +
                           " is not an 8-bit activation");
      }
      mem_[i] = static_cast<std::int8_t>(image[i]);
    }
  }

  LayerCycles conv(const Registers& regs, std::uint8_t id, bool& overflow, IntTensor* snapshot);

 private:
  std::int32_t input_at(std::size_t base, std::size_t index) const { return mem_[base + index]; }

  std::span<const FixedLayer> bank_;
  SimConfig config_;
  std::ostream* trace_;
  std::vector<std::int8_t> mem_;
};

LayerCycles Machine::conv(const Registers& regs, std::uint8_t id, bool& overflow, IntTensor* snapshot) {
  const DecodedLayer dl = decode_registers(regs, id);
  const LayerSpec& l = dl.spec;
  const std::string where = "CONV " + std::to_string(id);
  if (id >= bank_.size()) throw Halt{where + ": no weights for this layer"};
  const FixedLayer& w = bank_[id];
  const std::size_t n_c = l.coeffs_per_filter();
  if (w.channels != l.out_channels || w.n_c != n_c) {
    throw Halt{where + ": weights hold " + std::to_string(w.channels) + "x" + std::to_string(w.n_c) +
               " coefficients, registers describe " + std::to_string(l.out_channels) + "x" + std::to_string(n_c)};
  }
  std::size_t m_eff = 0;
  try {
    m_eff = config_.effective_levels(l.levels);
  } catch (const ConfigError& e) {
    throw Halt{where + ": " + e.what()};
  }
  if (w.levels < m_eff) throw Halt{where + ": weights store fewer bit-planes than M"};

  const bool dense = l.kind == LayerKind::kDense;
  const bool depthwise = l.kind == LayerKind::kDepthwise;
  const ConvGeometry g = ConvGeometry::from_layer(l);
  const std::size_t u_p = dense ? 1 : l.pooled_width();
  const std::size_t v_p = dense ? 1 : l.pooled_height();
  const std::size_t pool = dense ? 1 : l.pool_size();
  const std::size_t in_size = l.input_size();
  const std::size_t out_size = l.out_channels * u_p * v_p;
  if (dl.in_base + in_size > mem_.size() || dl.out_base + out_size > mem_.size()) {
    throw Halt{where + ": feature buffer access outside memory"};
  }
  if (dl.in_base < dl.out_base + out_size && dl.out_base < dl.in_base + in_size) {
    throw Halt{where + ": input and output buffers overlap"};
  }

  // Level chunks: one pass of M_arch PAs each.
  const std::size_t n_chunks = (m_eff + config_.m_arch - 1) / config_.m_arch;
  const std::size_t seq_chunks = config_.n_sa >= n_chunks ? 1 : (n_chunks + config_.n_sa - 1) / config_.n_sa;
  const std::size_t n_log = std::max<std::size_t>(1, config_.n_sa / n_chunks);
  const std::size_t group_width = depthwise ? 1 : config_.d_arch;
  const std::size_t n_groups = (l.out_channels + group_width - 1) / group_width;

  const std::vector<std::size_t> anchors = dense ? std::vector<std::size_t>{0} : agu_sequence(g);
  const std::size_t n_windows = anchors.size() / pool;
  std::size_t n_tiles = dense ? 1 : perf::tiles(config_, l, perf::logical_arrays(config_, m_eff));
  n_tiles = std::min(n_tiles, n_windows);
  const std::size_t per_tile = (n_windows + n_tiles - 1) / n_tiles;
  n_tiles = (n_windows + per_tile - 1) / per_tile;

  const std::size_t wp = g.padded_width();
  const fxp::QFormat out_fmt = fxp::QFormat::activation(0);
  const bool relu = l.activation == Activation::kRelu;

  // Tap offsets of one window in filter order (c, ky, kx), relative to the
  // anchor in the padded frame.
  struct Tap {
    std::size_t c, ky, kx;
  };
  std::vector<Tap> taps;
  taps.reserve(n_c);
  for (std::size_t c = 0; c < (depthwise ? 1 : l.in_channels); ++c) {
    for (std::size_t ky = 0; ky < l.kernel_height; ++ky) {
      for (std::size_t kx = 0; kx < l.kernel_width; ++kx) taps.push_back({c, ky, kx});
    }
  }
  auto fetch = [&](std::size_t anchor, std::size_t channel, const Tap& t) -> std::int32_t {
    if (dense) return input_at(dl.in_base, t.c);
    const std::size_t row = anchor / wp + t.ky, col = anchor % wp + t.kx;
    if (row < l.padding || col < l.padding) return 0;
    const std::size_t y = row - l.padding, x = col - l.padding;
    if (y >= l.in_height || x >= l.in_width) return 0;
    return input_at(dl.in_base, (channel * l.in_height + y) * l.in_width + x);
  };

  LayerCycles rep;
  rep.layer = id;
  rep.tiles = n_tiles;
  rep.level_chunks = n_chunks;
  rep.levels = m_eff;
  rep.windows = std::min(per_tile, n_windows) * pool;
  rep.local_resident = in_size + out_size <= config_.local_buffer_bytes;
  rep.weight_bits_per_pa = n_c * config_.d_arch;

  std::vector<std::uint64_t> job_cost;
  std::vector<std::uint64_t> job_accum;
  std::vector<std::uint64_t> job_stall;
  std::vector<std::uint64_t> job_latency;
  double util_sum = 0.0;

  std::vector<std::int8_t> out(out_size, 0);
  for (std::size_t grp = 0; grp < n_groups; ++grp) {
    const std::size_t d0 = grp * group_width;
    const std::size_t d_act = std::min(group_width, l.out_channels - d0);
    for (std::size_t tile = 0; tile < n_tiles; ++tile) {
      const std::size_t w_begin = tile * per_tile;
      const std::size_t w_end = std::min(n_windows, w_begin + per_tile);
      const std::size_t a_begin = w_begin * pool, a_end = w_end * pool;
      const std::size_t windows = a_end - a_begin;
      std::vector<fxp::FxValue> partial(d_act * windows);

      for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
        const std::size_t m_lo = chunk * config_.m_arch;
        const std::size_t m_hi = std::min(m_eff, m_lo + config_.m_arch);
        const bool final_chunk = chunk + 1 == n_chunks;
        Amu amu(pool, d_act, relu);
        std::vector<PEState> pes(d_act * (m_hi - m_lo));
        std::vector<std::int64_t> p(m_hi - m_lo);
        std::vector<fxp::FxValue> alphas(m_hi - m_lo);

        for (std::size_t a = a_begin; a < a_end; ++a) {
          const std::size_t anchor = anchors[a];
          if (trace_ && grp == 0 && chunk == 0) *trace_ << "A " << int(id) << ' ' << tile << ' ' << anchor << '\n';
          // Accumulation: one activation per clock broadcast to every PE.
          for (std::size_t i = 0; i < n_c; ++i) {
            for (std::size_t d = 0; d < d_act; ++d) {
              const std::size_t ch = d0 + d;
              const std::int32_t x = fetch(anchor, depthwise ? ch : taps[i].c, taps[i]);
              for (std::size_t m = m_lo; m < m_hi; ++m) {
                PEState& pe = pes[d * (m_hi - m_lo) + (m - m_lo)];
                pe = pe_step(pe, x, w.planes[ch].bit(m, i));
              }
            }
          }
          // Serialized PA output, channel by channel.
          for (std::size_t d = 0; d < d_act; ++d) {
            const std::size_t ch = d0 + d;
            for (std::size_t m = m_lo; m < m_hi; ++m) {
              PEState& pe = pes[d * (m_hi - m_lo) + (m - m_lo)];
              pe = pe_drain(pe);
              p[m - m_lo] = pe.output;
              alphas[m - m_lo] = w.alpha(ch, m);
            }
            fxp::FxValue& slot = partial[d * windows + (a - a_begin)];
            const fxp::FxValue prev = chunk == 0 ? w.bias_value(ch) : slot;
            const fxp::MacResult r = pa_output(p, alphas, prev);
            if (r.overflow) {
              overflow = true;
              if (trace_) *trace_ << "O " << int(id) << ' ' << ch << ' ' << anchor << '\n';
            }
            if (!final_chunk) {
              slot = r.value;
              continue;
            }
            const auto y = static_cast<std::int32_t>(fxp::requantize(r.value, out_fmt, dl.shift).raw);
            if (auto emitted = amu.push(y)) {
              const std::size_t arrival = a / pool;
              for (std::size_t e = 0; e < emitted->size(); ++e) {
                const std::size_t addr = odg_address(arrival, d0 + e, u_p, v_p);
                out[addr] = static_cast<std::int8_t>((*emitted)[e]);
                if (trace_) *trace_ << "E " << int(id) << ' ' << d0 + e << ' ' << addr << ' ' << (*emitted)[e] << '\n';
              }
            }
          }
        }
      }

      // Cost of this job on one logical array.
      const std::uint64_t per_anchor = std::max(n_c, d_act);
      std::uint64_t accum = 0, stall = 0, latency = 0;
      const std::size_t m_per_pass = (m_eff + seq_chunks - 1) / seq_chunks;
      for (std::size_t s = 0; s < seq_chunks; ++s) {
        accum += windows * n_c;
        stall += windows * (per_anchor - n_c);
        latency += config_.d_arch + m_per_pass + kPipelineStages;
      }
      job_accum.push_back(accum);
      job_stall.push_back(stall);
      job_latency.push_back(latency);
      job_cost.push_back(accum + stall + latency);
      util_sum += static_cast<double>(d_act) / static_cast<double>(config_.d_arch);
    }
  }

  // Jobs are dispatched in order to the logical arrays; a round lasts as long
  // as its slowest job.
  rep.jobs = job_cost.size();
  for (std::size_t j = 0; j < job_cost.size(); j += n_log) {
    std::size_t worst = j;
    for (std::size_t k = j; k < std::min(job_cost.size(), j + n_log); ++k) {
      if (job_cost[k] > job_cost[worst]) worst = k;
    }
    rep.cycles += job_cost[worst];
    rep.pe_accum_cycles += job_accum[worst];
    rep.serial_stall_cycles += job_stall[worst];
    rep.latency_cycles += job_latency[worst];
    ++rep.rounds;
  }
  rep.utilization = util_sum / static_cast<double>(rep.jobs);

  std::copy(out.begin(), out.end(), mem_.begin() + static_cast<std::ptrdiff_t>(dl.out_base));
  if (snapshot) {
    std::vector<std::int32_t> vals(out.begin(), out.end());
    *snapshot = dense ? IntTensor({l.out_channels}, std::move(vals))
                      : IntTensor({l.out_channels, v_p, u_p}, std::move(vals));
  }
  if (trace_) {
    *trace_ << "R " << int(id) << " cycles=" << rep.cycles << " accum=" << rep.pe_accum_cycles
            << " stall=" << rep.serial_stall_cycles << " latency=" << rep.latency_cycles << " jobs=" << rep.jobs
            << " rounds=" << rep.rounds << " tiles=" << rep.tiles << " chunks=" << rep.level_chunks << '\n';
  }
  return rep;
}

}  // namespace

SimResult run_program(const isa::Program& program, std::span<const FixedLayer> bank,
                      std::span<const IntTensor> images, const SimConfig& config, std::ostream* trace) {
  config.validate();
  program.validate();
  Machine machine(bank, config, trace);
  Registers regs;
  SimResult res;
  CycleReport frame;
  bool frame_done = false;  // last layer finished, waiting for the closing BRA
  std::size_t next_image = 0;
  const std::size_t limit = (images.size() + 2) * (program.code.size() + 1) * 4 + 1024;

  auto close_frame = [&]() {
    std::uint64_t layer_sum = 0;
    for (const auto& lc : frame.layers) layer_sum += lc.cycles;
    frame.total_cycles = layer_sum + frame.setup_cycles;
    frame.fps = frame.total_cycles ? config.clock_hz / static_cast<double>(frame.total_cycles) : 0.0;
    if (trace) *trace << "F " << res.frames.size() << " cycles=" << frame.total_cycles << '\n';
    res.frames.push_back(std::move(frame));
    frame = CycleReport{};
    frame_done = false;
  };

  std::size_t pc = 0;
  try {
    while (pc < program.code.size()) {
      if (res.instructions >= limit) throw Halt{"instruction limit reached; program does not wait for images"};
      const isa::Instruction& ins = program.code[pc];
      ++res.instructions;
      if (trace) *trace << "I " << pc + 1 << ' ' << ins.to_string() << '\n';
      switch (ins.op) {
        case Opcode::kSti: {
          const auto slot = static_cast<std::uint8_t>(ins.param);
          regs.value[slot] = ins.imm;
          regs.fresh[slot] = true;
          frame.setup_cycles += 1;
          res.total_cycles += 1;
          ++pc;
          break;
        }
        case Opcode::kHlt: {
          if (frame_done) close_frame();
          res.total_cycles += 1;
          if (next_image >= images.size()) {
            pc = program.code.size();
            break;
          }
          machine.load_image(images[next_image++]);
          frame.setup_cycles += 1;
          ++frame.hlt_waits;
          ++pc;
          break;
        }
        case Opcode::kConv: {
          for (const auto& p : isa::param_catalog()) {
            const auto slot = static_cast<std::uint8_t>(p.code);
            if (!regs.fresh[slot] && trace) *trace << "S " << pc + 1 << ' ' << p.name << '\n';
          }
          IntTensor snapshot;
          LayerCycles lc = machine.conv(regs, ins.layer, res.overflow, ins.last ? &snapshot : nullptr);
          regs.fresh.fill(false);
          frame.setup_cycles += 1;
          res.total_cycles += 1 + lc.cycles;
          frame.layers.push_back(lc);
          if (ins.last) {
            res.outputs.push_back(std::move(snapshot));
            frame_done = true;
          }
          ++pc;
          break;
        }
        case Opcode::kBra: {
          frame.setup_cycles += 1;
          res.total_cycles += 1;
          ++frame.branches;
          if (frame_done) close_frame();
          pc = ins.target - 1u;
          break;
        }
      }
    }
    if (frame_done) close_frame();
  } catch (const Halt& h) {
    res.halted = true;
    res.diagnostic = "step " + std::to_string(pc + 1) + ": " + h.message;
    if (trace) *trace << "X " << res.diagnostic << '\n';
  }
  return res;
}

SimResult simulate_network(const NetworkSpec& net, std::span<const FixedLayer> bank, const IntTensor& image,
                           const SimConfig& config, std::ostream* trace) {
  const isa::Program prog = isa::compile_network(net, config);
  return run_program(prog, bank, std::span<const IntTensor>(&image, 1), config, trace);
}

}  // namespace binarray::sim
