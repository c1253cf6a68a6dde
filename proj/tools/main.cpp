#include <iostream>

#include "CLI11.hpp"
#include "binarray/error.hpp"
#include "commands.hpp"

using namespace binarray;

int main(int argc, char** argv) {
  CLI::App app{"BinArray toolkit: binary weight approximation, program compiler, array simulator and throughput model"};
  app.require_subcommand(1);

  std::string config = "1x8x2", mode = "high_throughput";
  std::uint64_t seed = 1;
  double clock_mhz = 400.0;

  cli::SynthOptions syn;
  auto* c_syn = app.add_subcommand("synth", "Write seeded random weights and images for a network");
  c_syn->add_option("--network", syn.network, "Network spec (JSON)")->required()->check(CLI::ExistingFile);
  c_syn->add_option("--out", syn.out, "Output directory")->required();
  c_syn->add_option("--images", syn.images, "Number of images")->capture_default_str();
  c_syn->add_option("--seed", syn.seed, "Random seed")->capture_default_str();

  cli::ApproximateOptions apx;
  int alg = 2;
  std::string apx_json;
  auto* c_apx = app.add_subcommand("approximate", "Binary-approximate layer weights and report compression");
  c_apx->add_option("--network", apx.network, "Network spec (JSON)")->required()->check(CLI::ExistingFile);
  c_apx->add_option("--weights", apx.weights, "Directory of <layer>.w.bin tensors")->required()->check(CLI::ExistingDirectory);
  c_apx->add_option("--out", apx.out, "Output directory for banks")->required();
  c_apx->add_option("--levels", apx.levels, "M for all layers, or one value per layer")->delimiter(',');
  c_apx->add_option("--alg", alg, "Algorithm 1 (greedy) or 2 (refined)")->check(CLI::IsMember({1, 2}))->capture_default_str();
  c_apx->add_option("--iters", apx.iters, "Refinement iteration cap K")->capture_default_str();
  c_apx->add_option("--json", apx_json, "Also write the report as JSON ('-' for stdout)");

  cli::CompileOptions cmp;
  std::string cmp_out;
  auto* c_cmp = app.add_subcommand("compile", "Compile a network into a processing program");
  c_cmp->add_option("--network", cmp.network, "Network spec (JSON)")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--config", cmp.config, "Array configuration NxDxM")->capture_default_str();
  c_cmp->add_option("--out", cmp_out, "Output prefix for .s and .bin files");

  cli::SimulateOptions simo;
  std::string manifest, program, trace, sim_json;
  auto* c_sim = app.add_subcommand("simulate", "Run a program on the array simulator");
  c_sim->add_option("--manifest", manifest, "Run manifest (JSON)")->check(CLI::ExistingFile);
  c_sim->add_option("--network", simo.run.network, "Network spec (JSON)");
  c_sim->add_option("--weights", simo.run.weights, "Directory of <layer>.bank files");
  c_sim->add_option("--image", simo.run.images, "Image tensor(s)");
  c_sim->add_option("--config", config, "Array configuration NxDxM")->capture_default_str();
  c_sim->add_option("--mode", mode, "high_throughput or high_accuracy")->capture_default_str();
  c_sim->add_option("--clock", clock_mhz, "Clock in MHz")->capture_default_str();
  c_sim->add_option("--out", simo.run.out, "Output directory");
  c_sim->add_option("--program", program, "Program (.s or .bin) instead of compiling the network");
  c_sim->add_option("--trace", trace, "Write an event trace");
  c_sim->add_option("--json", sim_json, "Write the cycle report as JSON ('-' for stdout)");
  c_sim->add_flag("--check", simo.check, "Compare every frame against the fixed-point reference");
  c_sim->add_option("--seed", seed, "Random seed")->capture_default_str();

  cli::EstimateOptions est;
  std::string est_json, sweep;
  auto* c_est = app.add_subcommand("estimate", "Analytical throughput for one or more configurations");
  c_est->add_option("--network", est.network, "Network spec (JSON)")->required()->check(CLI::ExistingFile);
  c_est->add_option("--config", est.configs, "Array configuration(s) NxDxM");
  c_est->add_option("--sweep", sweep, "JSON list of [N_SA, D_arch, M_arch] triples")->check(CLI::ExistingFile);
  c_est->add_option("--clock", clock_mhz, "Clock in MHz")->capture_default_str();
  c_est->add_option("--mode", mode, "high_throughput or high_accuracy")->capture_default_str();
  c_est->add_option("--formula", est.formula, "Cycle formula: output, input or literal")->capture_default_str();
  c_est->add_flag("--offload", est.offload, "Run a final dense layer on the host CPU");
  c_est->add_option("--cpu-gops", est.cpu_gops, "Reference CPU throughput in GOPS")->capture_default_str();
  c_est->add_option("--json", est_json, "Write the estimates as JSON ('-' for stdout)");

  cli::VerifyOptions ver;
  std::string ver_manifest;
  auto* c_ver = app.add_subcommand("verify", "Run oracle-equivalence and invariant checks");
  c_ver->add_option("--manifest", ver_manifest, "Run manifest (JSON)")->check(CLI::ExistingFile);
  c_ver->add_flag("--quick", ver.quick, "Small sweeps only");
  c_ver->add_option("--seed", ver.seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    auto opt = [](const std::string& s) { return s.empty() ? std::optional<std::filesystem::path>() : s; };
    if (c_syn->parsed()) return cli::cmd_synth(syn, std::cout);
    if (c_apx->parsed()) {
      apx.alg = alg == 1 ? Algorithm::kGreedy : Algorithm::kRefined;
      apx.json = opt(apx_json);
      return cli::cmd_approximate(apx, std::cout);
    }
    if (c_cmp->parsed()) {
      cmp.out = opt(cmp_out);
      return cli::cmd_compile(cmp, std::cout);
    }
    if (c_sim->parsed()) {
      if (!manifest.empty()) {
        const auto out_override = simo.run.out;
        simo.run = cli::RunManifest::load(manifest);
        if (!out_override.empty()) simo.run.out = out_override;
      } else {
        if (simo.run.network.empty() || simo.run.weights.empty() || simo.run.images.empty()) {
          throw ConfigError("simulate needs --manifest or --network, --weights and --image");
        }
        simo.run.config = config;
        simo.run.mode = parse_mode(mode);
        simo.run.seed = seed;
      }
      simo.program = opt(program);
      simo.trace = opt(trace);
      simo.json = opt(sim_json);
      simo.clock_hz = clock_mhz * 1e6;
      return cli::cmd_simulate(simo, std::cout);
    }
    if (c_est->parsed()) {
      est.clock_hz = clock_mhz * 1e6;
      est.mode = parse_mode(mode);
      est.sweep = opt(sweep);
      est.json = opt(est_json);
      return cli::cmd_estimate(est, std::cout);
    }
    if (c_ver->parsed()) {
      ver.manifest = opt(ver_manifest);
      return cli::cmd_verify(ver, std::cout);
    }
  } catch (const AssembleError& e) {
    std::cerr << "assembly error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
