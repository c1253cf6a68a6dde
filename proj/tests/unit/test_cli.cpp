#include <filesystem>
#include <sstream>

#include "binarray/error.hpp"
#include "binarray/io.hpp"
#include "commands.hpp"
#include "doctest.h"

using namespace binarray;
using namespace binarray::cli;

namespace {

const char* kTinyNet = R"({
  "name": "tiny",
  "input": {"width": 10, "height": 10, "channels": 2, "format": {"bits": 8, "frac": 7}},
  "layers": [
    {"name": "c1", "kind": "conv", "kernel": [3, 3], "filters": 5, "pool": [2, 2],
     "levels": 3, "activation": "relu", "format": {"bits": 8, "frac": 5}},
    {"name": "d1", "kind": "dense", "units": 4, "levels": 2, "activation": "none",
     "format": {"bits": 8, "frac": 4}}
  ]
})";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "binarray_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("synth, approximate, compile and simulate agree with the reference") {
  const fs::path dir = fresh_dir("e2e");
  io::write_text(dir / "net.json", kTinyNet);
  std::ostringstream log;

  CHECK(cmd_synth({dir / "net.json", dir / "raw", 2, 7}, log) == 0);
  CHECK(fs::exists(dir / "raw" / "c1.w.bin"));
  CHECK(fs::exists(dir / "raw" / "image1.bin"));

  ApproximateOptions ao;
  ao.network = dir / "net.json";
  ao.weights = dir / "raw";
  ao.out = dir / "bank";
  CHECK(cmd_approximate(ao, log) == 0);
  CHECK(fs::exists(dir / "bank" / "c1.bank"));
  CHECK(fs::exists(dir / "bank" / "network.json"));

  CompileOptions co;
  co.network = dir / "bank" / "network.json";
  co.config = "2x4x2";
  co.out = dir / "prog";
  CHECK(cmd_compile(co, log) == 0);
  CHECK(fs::exists(dir / "prog.s"));

  for (const char* mode : {"ht", "ha"}) {
    io::write_text(dir / "run.json", std::string(R"({"network": "bank/network.json", "weights": "bank",
      "images": ["raw/image0.bin", "raw/image1.bin"], "config": "2x4x2", "mode": ")") +
                                         mode + R"(", "out": "sim"})");
    SimulateOptions so;
    so.run = RunManifest::load(dir / "run.json");
    so.check = true;
    std::ostringstream sim_log;
    CHECK(cmd_simulate(so, sim_log) == 0);
    CHECK(sim_log.str().find("MISMATCH") == std::string::npos);
    CHECK(sim_log.str().find("match") != std::string::npos);
    CHECK(fs::exists(dir / "sim" / "image1.out.bin"));
    CHECK(fs::exists(dir / "sim" / "cycles.json"));
  }

  VerifyOptions vo;
  vo.manifest = dir / "run.json";
  vo.quick = true;
  std::ostringstream verify_log;
  CHECK(cmd_verify(vo, verify_log) == 0);
  CHECK(verify_log.str().find("FAIL") == std::string::npos);
}

TEST_CASE("manifest with a missing path is rejected") {
  const fs::path dir = fresh_dir("missing");
  io::write_text(dir / "run.json", R"({"network": "nope.json", "weights": "w", "images": []})");
  const RunManifest m = RunManifest::load(dir / "run.json");
  CHECK(m.network == dir / "nope.json");
  try {
    m.check_paths();
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("nope.json") != std::string::npos);
  }
}

TEST_CASE("estimate prints a table and JSON") {
  EstimateOptions eo;
  eo.network = fs::path(BINARRAY_MODELS_DIR) / "cnn_a.json";
  eo.configs = {"1x8x2", "1x32x2"};
  std::ostringstream out;
  CHECK(cmd_estimate(eo, out) == 0);
  CHECK(out.str().find("354.") != std::string::npos);
  CHECK(out.str().find("819.") != std::string::npos);
}
