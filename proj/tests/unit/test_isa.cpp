#include <random>

#include "binarray/error.hpp"
#include "binarray/isa.hpp"
#include "doctest.h"

using namespace binarray;
using namespace binarray::isa;

namespace {

NetworkSpec two_layer() {
  NetworkSpec net;
  net.name = "two";
  net.in_width = net.in_height = 48;
  net.in_channels = 3;
  LayerSpec a;
  a.name = "conv1";
  a.kernel_width = a.kernel_height = 7;
  a.out_channels = 8;
  a.pool_width = a.pool_height = 2;
  LayerSpec b;
  b.name = "conv2";
  b.kernel_width = b.kernel_height = 4;
  b.out_channels = 150;
  b.pool_width = b.pool_height = 6;
  net.layers = {a, b};
  net.chain();
  return net;
}

}  // namespace

TEST_CASE("encodings of single instructions") {
  CHECK(assemble("HLT").words() == std::vector<std::uint32_t>{0x20000000u});
  const auto bra = assemble("BRA 1").words();
  CHECK((bra[0] >> 28) == 0x4);
  CHECK((bra[0] & 0xFFFF) == 1);
  const auto sti = assemble("STI r0 W_I=48").words();
  CHECK((sti[0] >> 28) == 0x1);
  CHECK(((sti[0] >> 24) & 0xF) == 0);
  CHECK(((sti[0] >> 16) & 0xFF) == static_cast<unsigned>(Param::kInWidth));
  CHECK((sti[0] & 0xFFFF) == 48);
  CHECK(assemble("CONV 3 LAST").words()[0] == 0x30000301u);
}

TEST_CASE("assembler errors carry line numbers") {
  auto line_of = [](const char* text) {
    try {
      assemble(text);
    } catch (const AssembleError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("HLT\nFOO 1\n") == 2);
  CHECK(line_of("HLT\n\nSTI r0 W_I=70000") == 3);
  CHECK(line_of("BRA nowhere\nHLT") == 1);
  CHECK(line_of("STI r1 W_I=4") == 1);
  CHECK(line_of("STI r0 XYZ=4") == 1);
  CHECK(line_of("HLT\nBRA 5") == 2);
}

TEST_CASE("labels and comments") {
  const Program p = assemble("; header\nloop:\n  STI r0 W_I=21 ; width\nHLT\nCONV 0 LAST\nBRA loop\n");
  REQUIRE(p.code.size() == 4);
  CHECK(p.code[3].target == 1);
  CHECK(p.comments[0] == "width");
  CHECK(p.labels.at("loop") == 1);
}

TEST_CASE("disassembly round-trips") {
  CHECK(disassemble({}).empty());
  const Program p = assemble("STI r0 W_I=48\nSTI r1 W_B=7\nHLT\nCONV 0\nSTI r0 W_I=21\nCONV 1 LAST\nBRA 1\n");
  const auto words = p.words();
  CHECK(assemble(disassemble(words)).words() == words);
  CHECK(disassemble(words) == "STI r0 W_I=48\nSTI r1 W_B=7\nHLT\nCONV 0\nSTI r0 W_I=21\nCONV 1 LAST\nBRA 1\n");
}

TEST_CASE("bad words are reported with their index") {
  const std::vector<std::uint32_t> words = {0x20000000u, 0x90000000u};
  try {
    disassemble(words);
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("word 1") != std::string::npos);
  }
  CHECK_THROWS_AS(Instruction::decode(0x20000001u), FormatError);
  CHECK_THROWS_AS(Instruction::decode(0x11010030u), FormatError);  // W_I in r1
  CHECK_THROWS_AS(Instruction::decode(0x10FF0000u), FormatError);
}

TEST_CASE("random programs round-trip through text and binary") {
  std::mt19937_64 rng(42);
  const auto cat = param_catalog();
  for (int t = 0; t < 100; ++t) {
    Program p;
    const std::size_t n = 1 + rng() % 40;
    for (std::size_t k = 0; k < n; ++k) {
      switch (rng() % 4) {
        case 0: p.code.push_back(Instruction::sti(cat[rng() % cat.size()].code, static_cast<std::uint16_t>(rng()))); break;
        case 1: p.code.push_back(Instruction::hlt()); break;
        case 2: p.code.push_back(Instruction::conv(static_cast<std::uint8_t>(rng()), rng() % 2)); break;
        default: p.code.push_back(Instruction::bra(static_cast<std::uint16_t>(1 + rng() % n))); break;
      }
    }
    const auto words = p.words();
    CHECK(assemble(disassemble(words)).words() == words);
    CHECK(from_binary(to_binary(p)).words() == words);
  }
}

TEST_CASE("binary program container") {
  const Program p = assemble("HLT\nBRA 1");
  auto bytes = to_binary(p);
  CHECK(bytes.size() == 12 + 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BARR");
  bytes[0] = 'X';
  CHECK_THROWS_AS(from_binary(bytes), FormatError);
  bytes = to_binary(p);
  bytes.pop_back();
  CHECK_THROWS_AS(from_binary(bytes), FormatError);
}

TEST_CASE("compiled two-layer program has the expected shape") {
  const Program p = compile_network(two_layer(), SimConfig{});
  CHECK_NOTHROW(p.validate());
  CHECK(p.code.front().to_string() == "STI r0 W_I=48");
  const auto find = [&](const std::string& s, std::size_t from = 0) {
    for (std::size_t k = from; k < p.code.size(); ++k) {
      if (p.code[k].to_string() == s) return k;
    }
    return p.code.size();
  };
  const std::size_t wb = find("STI r1 W_B=7"), hlt = find("HLT"), c0 = find("CONV 0");
  CHECK(wb < hlt);
  CHECK(hlt + 1 == c0);
  const std::size_t wi2 = find("STI r0 W_I=21", c0), wb2 = find("STI r1 W_B=4", c0), c1 = find("CONV 1 LAST");
  CHECK(c0 < wi2);
  CHECK(wi2 < wb2);
  CHECK(wb2 < c1);
  CHECK(c1 + 2 == p.code.size());
  CHECK(p.code.back().to_string() == "BRA 1");
}

TEST_CASE("single-layer program is bursts, HLT, CONV LAST, BRA") {
  NetworkSpec net = two_layer();
  net.layers.resize(1);
  const Program p = compile_network(net, SimConfig{});
  const std::size_t n = p.code.size();
  CHECK(p.code[n - 3].op == Opcode::kHlt);
  CHECK(p.code[n - 2].to_string() == "CONV 0 LAST");
  CHECK(p.code[n - 1].to_string() == "BRA 1");
  for (std::size_t k = 0; k + 3 < n; ++k) CHECK(p.code[k].op == Opcode::kSti);
  CHECK(compile_network(net, SimConfig{}).words() == p.words());
}

TEST_CASE("compile errors name the layer") {
  NetworkSpec net = two_layer();
  net.layers[1].kind = LayerKind::kUnsupported;
  net.layers[1].kind_text = "avgpool";
  try {
    compile_network(net, SimConfig{});
    FAIL("expected an error");
  } catch (const CompileError& e) {
    CHECK(std::string(e.what()).find("conv2") != std::string::npos);
  }
  NetworkSpec deep = two_layer();
  deep.layers[0].levels = 5;
  CHECK_THROWS_AS(compile_network(deep, SimConfig{}), CompileError);
}

TEST_CASE("parameter catalog is consistent") {
  for (const auto& p : param_catalog()) {
    CHECK(find_param(p.name) == &p);
    CHECK(find_param(static_cast<std::uint8_t>(p.code)) == &p);
  }
  CHECK(find_param("NOPE") == nullptr);
}
