#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binarray/config.hpp"
#include "binarray/network.hpp"

/// 32-bit control-unit instruction set.
///
///   [31:28] opcode  STI=0x1  HLT=0x2  CONV=0x3  BRA=0x4
///   STI   [27:24] register file  [23:16] parameter code  [15:0] immediate
///   CONV  [15:8] layer id  [0] last-layer flag
///   BRA   [15:0] target step (1-based, step 1 is the first instruction)
///
/// All other bits are zero in a valid word.
namespace binarray::isa {

enum class Opcode : std::uint8_t { kSti = 0x1, kHlt = 0x2, kConv = 0x3, kBra = 0x4 };

inline constexpr int kCatalogVersion = 1;
inline constexpr std::uint8_t kFormatVersion = 1;

/// Configuration-register catalog (version 1).
enum class Param : std::uint8_t {
  kInWidth = 0x01,    // W_I
  kInHeight = 0x02,   // H_I
  kInChannels = 0x03, // C_I
  kPadding = 0x04,    // P
  kStride = 0x05,     // S
  kKernelWidth = 0x10,   // W_B
  kKernelHeight = 0x11,  // H_B
  kFilters = 0x12,       // D
  kLevels = 0x13,        // M
  kKind = 0x14,          // 0 conv, 1 dense, 2 depth-wise
  kPoolWidth = 0x20,     // W_P
  kPoolHeight = 0x21,    // H_P
  kRelu = 0x22,
  kShift = 0x30,         // requantize shift
  kInBase = 0x40,        // feature buffer addresses, 16-byte units
  kOutBase = 0x41,
};

struct ParamInfo {
  Param code;
  std::string_view name;
  std::uint8_t reg;  // register file the parameter lives in
  std::string_view description;
};

std::span<const ParamInfo> param_catalog();
const ParamInfo* find_param(std::string_view name);
const ParamInfo* find_param(std::uint8_t code);

inline constexpr std::size_t kBufferUnit = 16;

struct Instruction {
  Opcode op = Opcode::kHlt;
  Param param = Param::kInWidth;  // STI
  std::uint16_t imm = 0;          // STI immediate
  std::uint8_t layer = 0;         // CONV
  bool last = false;              // CONV
  std::uint16_t target = 1;       // BRA

  static Instruction sti(Param p, std::uint16_t value);
  static Instruction hlt();
  static Instruction conv(std::uint8_t layer, bool last);
  static Instruction bra(std::uint16_t step);

  std::uint32_t encode() const;
  /// Throws FormatError on unknown opcodes, parameter codes or stray bits.
  static Instruction decode(std::uint32_t word);

  std::string to_string() const;
  bool operator==(const Instruction&) const = default;
};

struct Program {
  std::vector<Instruction> code;
  std::vector<std::string> comments;     // parallel to code, may be empty strings
  std::map<std::string, std::uint16_t> labels;  // label -> step

  std::vector<std::uint32_t> words() const;
  /// Every BRA target is a valid step and there is at least one CONV or HLT.
  void validate() const;
  /// Canonical text; with `annotate` the stored comments are appended.
  std::string to_text(bool annotate = true) const;
};

/// Parses assembly: one instruction per line, ';' starts a comment,
/// "name:" defines a label for the next instruction.
Program assemble(std::string_view text);

/// One canonical line per word. Throws FormatError naming the word index.
std::string disassemble(std::span<const std::uint32_t> words);

Program from_words(std::span<const std::uint32_t> words);

/// Emits a per-layer STI burst, HLT before the first CONV, one CONV per
/// layer (last flag on the final one) and a closing BRA back to step 1.
Program compile_network(const NetworkSpec& net, const SimConfig& config);

/// Feature buffer placement chosen by compile_network, in bytes.
struct BufferPlan {
  std::vector<std::size_t> in_base;
  std::vector<std::size_t> out_base;
  std::size_t bytes = 0;
};
BufferPlan plan_buffers(const NetworkSpec& net);

/// "BARR", version byte, 3 reserved bytes, little-endian word count, words.
std::vector<std::uint8_t> to_binary(const Program& p);
Program from_binary(std::span<const std::uint8_t> bytes);

}  // namespace binarray::isa
