#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "nvloc/errors.hpp"
#include "nvloc/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<std::string> fix_a_iso;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::string format = "text";
};

nvloc::PipelineConfig load_config(const Common& o) {
  std::string path = o.config;
  if (path.empty()) {
    if (const char* env = std::getenv("NVLOC_CONFIG"); env && *env) path = env;
  }
  nvloc::PipelineConfig cfg = path.empty() ? nvloc::PipelineConfig{} : nvloc::PipelineConfig::load(path);
  if (o.seed) cfg.mc.seed = *o.seed;
  if (o.samples) cfg.mc.n_samples = *o.samples;
  if (o.fix_a_iso) cfg.a_iso_override = nvloc::AIsoChoice::parse(*o.fix_a_iso);
  if (o.out) cfg.output_dir = *o.out;
  if (o.threads) cfg.threads = std::max<std::size_t>(1, *o.threads);
  cfg.validate();
  return cfg;
}

std::string input_or(const std::string& given, const std::optional<std::string>& from_config, const char* what) {
  if (!given.empty()) return given;
  if (from_config) return *from_config;
  throw nvloc::InputError(std::string("no ") + what + " file given on the command line or in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nuclear spin localization from precession frequencies under switchable vector fields"};
  app.set_version_flag("--version", nvloc::kVersion);
  app.require_subcommand(1);

  Common o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config (default: $NVLOC_CONFIG)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--samples", o.samples, "Monte Carlo samples per nucleus (0: point estimate only)");
    sub->add_option("--fix-a-iso", o.fix_a_iso, "a_iso for every nucleus: value in kHz, 'free' or 'auto'");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads for the Monte Carlo");
    sub->add_option("--format", o.format, "stdout format")->check(CLI::IsMember({"json", "text"}));
  };

  std::string input;
  bool traces = false;
  auto* cal = app.add_subcommand("calibrate", "vector field from ODMR lines");
  cal->add_option("odmr_file", input, "ODMR resonance file");
  add_common(cal);
  auto* loc = app.add_subcommand("localize", "couplings, azimuth and position per nucleus");
  loc->add_option("measurements", input, "measurement file");
  add_common(loc);
  auto* sim = app.add_subcommand("simulate", "synthetic measurement file from a truth file");
  sim->add_option("truth", input, "truth file");
  sim->add_flag("--traces", traces, "also write the synthetic time traces");
  add_common(sim);
  auto* dft = app.add_subcommand("dft-residuals", "point-dipole inversion against a DFT table");
  dft->add_option("table", input, "DFT hyperfine table");
  add_common(dft);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const nvloc::PipelineConfig cfg = load_config(o);
    nvloc::CommandResult res;
    if (cal->parsed()) {
      res = nvloc::cmd_calibrate(input_or(input, cfg.odmr_file, "ODMR"), cfg);
    } else if (loc->parsed()) {
      res = nvloc::cmd_localize(input_or(input, cfg.measurements_file, "measurement"), cfg);
    } else if (sim->parsed()) {
      res = nvloc::cmd_simulate(input_or(input, cfg.truth_file, "truth"), cfg, o.seed, traces);
    } else {
      res = nvloc::cmd_dft_residuals(input_or(input, cfg.dft_file, "DFT table"), cfg);
    }
    if (o.format == "json") {
      std::cout << res.report.dump(2) << "\n";
    } else {
      std::cout << res.text;
      if (cfg.verbosity > 0) std::cout << "wrote " << res.files.size() << " files to " << cfg.output_dir << "\n";
    }
    return res.exit_code;
  } catch (const std::exception& e) {
    const int rc = nvloc::exit_code_for(e);
    std::cerr << "nvloc: " << (rc == 2 ? "input error: " : "error: ") << e.what() << "\n";
    return rc;
  }
}
