#include <filesystem>
#include <fstream>
#include <random>

#include "binarray/binapprox.hpp"
#include "binarray/error.hpp"
#include "binarray/io.hpp"
#include "binarray/isa.hpp"
#include "doctest.h"

using namespace binarray;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "binarray_io_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("tensor containers round-trip") {
  const Tensor t({2, 3}, {0.5, -1.25, 3.0, 1e-9, -7.0, 2.0});
  const fs::path p = scratch("t.bin");
  io::write_tensor(p, t);
  CHECK(io::read_tensor(p) == t);
  CHECK(io::tensor_dtype(p) == io::DType::kF64);
  const std::string bytes = slurp(p);
  const std::size_t nl = bytes.find('\n');
  CHECK((nl + 1) % io::kDataAlign == 0);
  CHECK(bytes.size() == nl + 1 + 6 * 8);

  const IntTensor i({1, 2, 2}, {-128, 0, 5, 127});
  io::write_tensor(p, i);
  CHECK(io::read_int_tensor(p) == i);
}

TEST_CASE("corrupt payload is reported with file and offset") {
  const fs::path p = scratch("c.bin");
  io::write_tensor(p, Tensor({4}, {1, 2, 3, 4}));
  std::string bytes = slurp(p);
  bytes.back() ^= 0x40;
  spit(p, bytes);
  const std::string msg = error_of([&] { io::read_tensor(p); });
  CHECK(msg.find("c.bin") != std::string::npos);
  CHECK(msg.find("checksum") != std::string::npos);
  CHECK(msg.find("offset " + std::to_string(bytes.find('\n') + 1)) != std::string::npos);

  bytes = slurp(p);
  bytes.resize(bytes.size() - 3);
  spit(p, bytes);
  CHECK(error_of([&] { io::read_tensor(p); }).find("truncated") != std::string::npos);

  spit(p, "no newline here");
  CHECK_FALSE(error_of([&] { io::read_tensor(p); }).empty());
}

TEST_CASE("weight banks round-trip") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  ApproxBank bank;
  for (int f = 0; f < 3; ++f) {
    std::vector<double> w(70);
    for (auto& v : w) v = g(rng);
    auto a = approx::approximate_alg2(w, 3, 20);
    a.bias = f - 1.0;
    bank.push_back(a);
  }
  const fs::path p = scratch("l.bank");
  io::write_bank(p, bank);
  const ApproxBank back = io::read_bank(p);
  REQUIRE(back.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(back[f].planes == bank[f].planes);
    CHECK(back[f].alphas == bank[f].alphas);
    CHECK(back[f].bias == bank[f].bias);
    CHECK(back[f].residual == bank[f].residual);
  }
}

TEST_CASE("bank padding bits are rejected") {
  ApproxBank bank(1);
  bank[0].planes = approx::BitPlanes(1, 3);
  bank[0].alphas = {1.0};
  const fs::path p = scratch("pad.bank");
  io::write_bank(p, bank);
  std::string bytes = slurp(p);
  const std::size_t key = bytes.find("\"checksum\"");
  REQUIRE(key != std::string::npos);
  bytes[key + 1] = 'X';  // drop the checksum so the bit flip reaches the padding check
  bytes[bytes.size() - 8] = static_cast<char>(0x08);
  spit(p, bytes);
  const std::string msg = error_of([&] { io::read_bank(p); });
  CHECK(msg.find("padding") != std::string::npos);
  CHECK(msg.find("offset") != std::string::npos);
}

TEST_CASE("programs by extension") {
  const isa::Program prog = isa::assemble("STI r0 W_I=4\nHLT\nCONV 0 LAST\nBRA 1");
  for (const char* name : {"p.s", "p.bin"}) {
    const fs::path p = scratch(name);
    io::write_program(p, prog);
    CHECK(io::read_program(p).words() == prog.words());
  }
}

TEST_CASE("checksum function") {
  CHECK(io::fnv1a(nullptr, 0) == 0xcbf29ce484222325ull);
  const std::uint8_t a[] = {'a'};
  CHECK(io::fnv1a(a, 1) == 0xaf63dc4c8601ec8cull);
}
