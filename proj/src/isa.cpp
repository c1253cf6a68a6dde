#include "binarray/isa.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstring>
#include <sstream>

#include "binarray/error.hpp"

namespace binarray::isa {

namespace {

constexpr std::array<ParamInfo, 16> kCatalog{{
    {Param::kInWidth, "W_I", 0, "input width"},
    {Param::kInHeight, "H_I", 0, "input height"},
    {Param::kInChannels, "C_I", 0, "input channels"},
    {Param::kPadding, "P", 0, "zero padding"},
    {Param::kStride, "S", 0, "stride"},
    {Param::kKernelWidth, "W_B", 1, "kernel width"},
    {Param::kKernelHeight, "H_B", 1, "kernel height"},
    {Param::kFilters, "D", 1, "output channels"},
    {Param::kLevels, "M", 1, "bit-planes"},
    {Param::kKind, "KIND", 1, "layer kind (0 conv, 1 dense, 2 depth-wise)"},
    {Param::kPoolWidth, "W_P", 2, "pooling width"},
    {Param::kPoolHeight, "H_P", 2, "pooling height"},
    {Param::kRelu, "RELU", 2, "ReLU enable"},
    {Param::kShift, "SHIFT", 3, "requantize shift"},
    {Param::kInBase, "IN_BASE", 4, "input buffer base (16-byte units)"},
    {Param::kOutBase, "OUT_BASE", 4, "output buffer base (16-byte units)"},
}};

const ParamInfo& info(Param p) {
  const ParamInfo* i = find_param(static_cast<std::uint8_t>(p));
  if (i == nullptr) throw FormatError("unknown parameter code");
  return *i;
}

std::string hex_word(std::uint32_t w) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", w);
  return buf;
}

std::string upper(std::string_view s) {
  std::string r(s);
  for (char& c : r) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return r;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

bool parse_uint(std::string_view s, std::uint64_t& v) {
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  return ec == std::errc() && p == s.data() + s.size();
}

bool is_label(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; });
}

}  // namespace

std::span<const ParamInfo> param_catalog() { return kCatalog; }

const ParamInfo* find_param(std::string_view name) {
  const std::string key = upper(name);
  for (const auto& p : kCatalog) {
    if (p.name == key) return &p;
  }
  return nullptr;
}

const ParamInfo* find_param(std::uint8_t code) {
  for (const auto& p : kCatalog) {
    if (static_cast<std::uint8_t>(p.code) == code) return &p;
  }
  return nullptr;
}

Instruction Instruction::sti(Param p, std::uint16_t value) {
  Instruction i;
  i.op = Opcode::kSti;
  i.param = p;
  i.imm = value;
  return i;
}

Instruction Instruction::hlt() { return Instruction{}; }

Instruction Instruction::conv(std::uint8_t layer, bool last) {
  Instruction i;
  i.op = Opcode::kConv;
  i.layer = layer;
  i.last = last;
  return i;
}

Instruction Instruction::bra(std::uint16_t step) {
  Instruction i;
  i.op = Opcode::kBra;
  i.target = step;
  return i;
}

std::uint32_t Instruction::encode() const {
  const std::uint32_t opc = static_cast<std::uint32_t>(op) << 28;
  switch (op) {
    case Opcode::kSti:
      return opc | (std::uint32_t{info(param).reg} << 24) | (std::uint32_t{static_cast<std::uint8_t>(param)} << 16) |
             imm;
    case Opcode::kHlt: return opc;
    case Opcode::kConv: return opc | (std::uint32_t{layer} << 8) | (last ? 1u : 0u);
    case Opcode::kBra: return opc | target;
  }
  throw FormatError("unknown opcode");
}

Instruction Instruction::decode(std::uint32_t w) {
  const auto bad = [w](const std::string& why) { return FormatError("word " + hex_word(w) + ": " + why); };
  switch (w >> 28) {
    case 0x1: {
      const auto reg = static_cast<std::uint8_t>((w >> 24) & 0xF);
      const auto code = static_cast<std::uint8_t>((w >> 16) & 0xFF);
      const ParamInfo* p = find_param(code);
      if (p == nullptr) throw bad("unknown parameter code " + std::to_string(code));
      if (p->reg != reg) {
        throw bad("parameter " + std::string(p->name) + " lives in r" + std::to_string(p->reg) + ", not r" +
                  std::to_string(reg));
      }
      return sti(p->code, static_cast<std::uint16_t>(w & 0xFFFF));
    }
    case 0x2:
      if (w & 0x0FFFFFFFu) throw bad("HLT has no operands");
      return hlt();
    case 0x3:
      if (w & 0x0FFF00FEu) throw bad("stray bits in CONV");
      return conv(static_cast<std::uint8_t>((w >> 8) & 0xFF), (w & 1u) != 0);
    case 0x4:
      if (w & 0x0FFF0000u) throw bad("stray bits in BRA");
      return bra(static_cast<std::uint16_t>(w & 0xFFFF));
    default: throw bad("unknown opcode " + std::to_string(w >> 28));
  }
}

std::string Instruction::to_string() const {
  switch (op) {
    case Opcode::kSti: {
      const ParamInfo& p = info(param);
      return "STI r" + std::to_string(p.reg) + " " + std::string(p.name) + "=" + std::to_string(imm);
    }
    case Opcode::kHlt: return "HLT";
    case Opcode::kConv: return "CONV " + std::to_string(layer) + (last ? " LAST" : "");
    case Opcode::kBra: return "BRA " + std::to_string(target);
  }
  return "?";
}

std::vector<std::uint32_t> Program::words() const {
  std::vector<std::uint32_t> w;
  w.reserve(code.size());
  for (const auto& i : code) w.push_back(i.encode());
  return w;
}

void Program::validate() const {
  bool has_stop = false;
  for (std::size_t k = 0; k < code.size(); ++k) {
    const auto& i = code[k];
    if (i.op == Opcode::kBra && (i.target < 1 || i.target > code.size())) {
      throw FormatError("step " + std::to_string(k + 1) + ": branch target " + std::to_string(i.target) +
                        " outside 1.." + std::to_string(code.size()));
    }
    has_stop |= i.op == Opcode::kConv || i.op == Opcode::kHlt;
  }
  if (!has_stop) throw FormatError("program has no CONV or HLT instruction");
}

std::string Program::to_text(bool annotate) const {
  std::multimap<std::uint16_t, std::string> at;
  for (const auto& [name, step] : labels) at.emplace(step, name);
  std::string out;
  for (std::size_t k = 0; k < code.size(); ++k) {
    const auto [b, e] = at.equal_range(static_cast<std::uint16_t>(k + 1));
    for (auto it = b; it != e; ++it) out += it->second + ":\n";
    std::string line = code[k].to_string();
    if (annotate && k < comments.size() && !comments[k].empty()) {
      line.resize(std::max<std::size_t>(line.size() + 1, 24), ' ');
      line += "; " + comments[k];
    }
    out += line + "\n";
  }
  return out;
}

Program assemble(std::string_view text) {
  struct PendingBranch {
    std::size_t index;
    std::string label;
    int line;
  };
  Program prog;
  std::vector<PendingBranch> pending;
  std::vector<int> line_of;
  std::vector<std::string> waiting_labels;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    std::string comment;
    if (const auto semi = raw.find(';'); semi != std::string_view::npos) {
      comment = std::string(trim(raw.substr(semi + 1)));
      raw = raw.substr(0, semi);
    }
    std::string_view body = trim(raw);
    if (const auto colon = body.find(':'); colon != std::string_view::npos) {
      const std::string_view name = trim(body.substr(0, colon));
      if (!is_label(name)) throw AssembleError(line_no, "bad label '" + std::string(name) + "'");
      if (prog.labels.count(std::string(name)) != 0 ||
          std::find(waiting_labels.begin(), waiting_labels.end(), name) != waiting_labels.end()) {
        throw AssembleError(line_no, "label '" + std::string(name) + "' defined twice");
      }
      waiting_labels.emplace_back(name);
      body = trim(body.substr(colon + 1));
    }
    if (body.empty()) {
      if (pos > text.size()) break;
      continue;
    }

    const auto tok = split_ws(body);
    const std::string mnem = upper(tok[0]);
    Instruction ins;
    if (mnem == "HLT") {
      if (tok.size() != 1) throw AssembleError(line_no, "HLT takes no operands");
      ins = Instruction::hlt();
    } else if (mnem == "STI") {
      if (tok.size() < 3) throw AssembleError(line_no, "expected 'STI r<n> NAME=value'");
      const std::string& reg_tok = tok[1];
      std::uint64_t reg = 0;
      if (reg_tok.size() < 2 || std::tolower(static_cast<unsigned char>(reg_tok[0])) != 'r' ||
          !parse_uint(std::string_view(reg_tok).substr(1), reg)) {
        throw AssembleError(line_no, "bad register '" + reg_tok + "'");
      }
      std::string assign;
      for (std::size_t t = 2; t < tok.size(); ++t) assign += tok[t];
      const auto eq = assign.find('=');
      if (eq == std::string::npos) throw AssembleError(line_no, "expected NAME=value");
      const ParamInfo* p = find_param(assign.substr(0, eq));
      if (p == nullptr) throw AssembleError(line_no, "unknown parameter '" + assign.substr(0, eq) + "'");
      if (p->reg != reg) {
        throw AssembleError(line_no, std::string(p->name) + " lives in r" + std::to_string(p->reg) + ", not r" +
                                         std::to_string(reg));
      }
      std::uint64_t v = 0;
      if (!parse_uint(std::string_view(assign).substr(eq + 1), v)) {
        throw AssembleError(line_no, "bad immediate '" + assign.substr(eq + 1) + "'");
      }
      if (v > 0xFFFF) throw AssembleError(line_no, "immediate " + std::to_string(v) + " overflows 16 bits");
      ins = Instruction::sti(p->code, static_cast<std::uint16_t>(v));
    } else if (mnem == "CONV") {
      if (tok.size() < 2 || tok.size() > 3) throw AssembleError(line_no, "expected 'CONV <layer> [LAST]'");
      std::uint64_t id = 0;
      if (!parse_uint(tok[1], id)) throw AssembleError(line_no, "bad layer id '" + tok[1] + "'");
      if (id > 0xFF) throw AssembleError(line_no, "layer id " + std::to_string(id) + " overflows 8 bits");
      if (tok.size() == 3 && upper(tok[2]) != "LAST") throw AssembleError(line_no, "unexpected '" + tok[2] + "'");
      ins = Instruction::conv(static_cast<std::uint8_t>(id), tok.size() == 3);
    } else if (mnem == "BRA") {
      if (tok.size() != 2) throw AssembleError(line_no, "expected 'BRA <step|label>'");
      std::uint64_t step = 0;
      if (parse_uint(tok[1], step)) {
        if (step > 0xFFFF) throw AssembleError(line_no, "branch target overflows 16 bits");
        ins = Instruction::bra(static_cast<std::uint16_t>(step));
      } else if (is_label(tok[1])) {
        ins = Instruction::bra(0);
        pending.push_back({prog.code.size(), tok[1], line_no});
      } else {
        throw AssembleError(line_no, "bad branch target '" + tok[1] + "'");
      }
    } else {
      throw AssembleError(line_no, "unknown mnemonic '" + tok[0] + "'");
    }

    const auto step = static_cast<std::uint16_t>(prog.code.size() + 1);
    for (auto& l : waiting_labels) prog.labels.emplace(std::move(l), step);
    waiting_labels.clear();
    prog.code.push_back(ins);
    prog.comments.push_back(comment);
    line_of.push_back(line_no);
    if (pos > text.size()) break;
  }
  if (!waiting_labels.empty()) {
    throw AssembleError(line_no, "label '" + waiting_labels.front() + "' has no instruction");
  }
  for (const auto& b : pending) {
    const auto it = prog.labels.find(b.label);
    if (it == prog.labels.end()) throw AssembleError(b.line, "undefined label '" + b.label + "'");
    prog.code[b.index].target = it->second;
  }
  for (std::size_t k = 0; k < prog.code.size(); ++k) {
    const auto& i = prog.code[k];
    if (i.op == Opcode::kBra && (i.target < 1 || i.target > prog.code.size())) {
      throw AssembleError(line_of[k], "branch target " + std::to_string(i.target) + " outside 1.." +
                                          std::to_string(prog.code.size()));
    }
  }
  return prog;
}

Program from_words(std::span<const std::uint32_t> words) {
  Program p;
  for (std::size_t k = 0; k < words.size(); ++k) {
    try {
      p.code.push_back(Instruction::decode(words[k]));
    } catch (const FormatError& e) {
      throw FormatError("word " + std::to_string(k) + ": " + e.what());
    }
  }
  p.comments.assign(p.code.size(), {});
  return p;
}

std::string disassemble(std::span<const std::uint32_t> words) { return from_words(words).to_text(false); }

BufferPlan plan_buffers(const NetworkSpec& net) {
  auto round_up = [](std::size_t n) { return (n + kBufferUnit - 1) / kBufferUnit * kBufferUnit; };
  std::size_t region = round_up(net.input_size());
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::kUnsupported) continue;
    region = std::max({region, round_up(l.input_size()), round_up(l.output_size())});
  }
  BufferPlan plan;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    plan.in_base.push_back(k % 2 == 0 ? 0 : region);
    plan.out_base.push_back(k % 2 == 0 ? region : 0);
  }
  plan.bytes = 2 * region;
  return plan;
}

Program compile_network(const NetworkSpec& net, const SimConfig& config) {
  config.validate();
  if (net.layers.empty()) throw CompileError("network has no layers");
  if (net.layers.size() > 256) throw CompileError("more than 256 layers");
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::kUnsupported) {
      throw CompileError("layer '" + l.name + "': unsupported layer kind '" + l.kind_text + "'");
    }
  }
  try {
    net.validate();
  } catch (const ConfigError& e) {
    throw CompileError(e.what());
  }
  const BufferPlan plan = plan_buffers(net);
  if (plan.bytes > config.feature_memory_bytes) {
    throw CompileError("feature buffers need " + std::to_string(plan.bytes) + " bytes, memory has " +
                       std::to_string(config.feature_memory_bytes));
  }

  Program prog;
  auto emit = [&](Instruction i, std::string comment) {
    prog.code.push_back(i);
    prog.comments.push_back(std::move(comment));
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& l = net.layers[k];
    if (l.levels > 2 * config.m_arch) {
      throw CompileError("layer '" + l.name + "': M=" + std::to_string(l.levels) + " exceeds two passes of M_arch=" +
                         std::to_string(config.m_arch));
    }
    const bool dense = l.kind == LayerKind::kDense;
    const std::size_t kind = dense ? 1 : (l.kind == LayerKind::kDepthwise ? 2 : 0);
    const std::pair<Param, std::size_t> burst[] = {
        {Param::kInWidth, l.in_width},
        {Param::kInHeight, l.in_height},
        {Param::kInChannels, l.in_channels},
        {Param::kPadding, l.padding},
        {Param::kStride, l.stride},
        {Param::kKernelWidth, dense ? 1 : l.kernel_width},
        {Param::kKernelHeight, dense ? 1 : l.kernel_height},
        {Param::kFilters, l.out_channels},
        {Param::kLevels, l.levels},
        {Param::kKind, kind},
        {Param::kPoolWidth, l.pool_width},
        {Param::kPoolHeight, l.pool_height},
        {Param::kRelu, l.activation == Activation::kRelu ? 1u : 0u},
        {Param::kShift, static_cast<std::size_t>(l.requant_shift())},
        {Param::kInBase, plan.in_base[k] / kBufferUnit},
        {Param::kOutBase, plan.out_base[k] / kBufferUnit},
    };
    for (const auto& [p, v] : burst) {
      if (v > 0xFFFF) {
        throw CompileError("layer '" + l.name + "': " + std::string(info(p).name) + "=" + std::to_string(v) +
                           " does not fit a 16-bit immediate");
      }
      std::string comment;
      if (p == Param::kInWidth) comment = "layer " + std::to_string(k) + " (" + l.name + ")";
      emit(Instruction::sti(p, static_cast<std::uint16_t>(v)), std::move(comment));
    }
    if (k == 0) emit(Instruction::hlt(), "wait for next image");
    const bool last = k + 1 == net.layers.size();
    emit(Instruction::conv(static_cast<std::uint8_t>(k), last), last ? "last layer" : "");
  }
  emit(Instruction::bra(1), "next frame");
  prog.labels.emplace("start", 1);
  return prog;
}

std::vector<std::uint8_t> to_binary(const Program& p) {
  const auto words = p.words();
  std::vector<std::uint8_t> out = {'B', 'A', 'R', 'R', kFormatVersion, 0, 0, 0};
  auto put32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  put32(static_cast<std::uint32_t>(words.size()));
  for (const auto w : words) put32(w);
  return out;
}

Program from_binary(std::span<const std::uint8_t> bytes) {
  auto get32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t{bytes[off + b]} << (8 * b);
    return v;
  };
  if (bytes.size() < 12) throw FormatError("program file truncated at offset " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), "BARR", 4) != 0) throw FormatError("bad magic at offset 0");
  if (bytes[4] != kFormatVersion) {
    throw FormatError("unsupported program version " + std::to_string(bytes[4]) + " at offset 4");
  }
  for (std::size_t i = 5; i < 8; ++i) {
    if (bytes[i] != 0) throw FormatError("reserved byte set at offset " + std::to_string(i));
  }
  const std::uint32_t n = get32(8);
  if (bytes.size() != 12 + std::size_t{n} * 4) {
    throw FormatError("program declares " + std::to_string(n) + " words but holds " +
                      std::to_string((bytes.size() - 12) / 4) + " (offset 8)");
  }
  std::vector<std::uint32_t> words(n);
  for (std::size_t k = 0; k < n; ++k) words[k] = get32(12 + 4 * k);
  try {
    return from_words(words);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " (file offset base 12)");
  }
}

}  // namespace binarray::isa
