#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nvloc/calibrate.hpp"
#include "nvloc/localize.hpp"
#include "nvloc/montecarlo.hpp"
#include "nvloc/signal.hpp"

namespace nvloc {

inline constexpr const char* kVersion = "0.1.0";

/// How a_iso is treated: fixed to a value, fitted jointly with phi, or fixed to 0 when
/// the point-dipole radius exceeds the nucleus' threshold.
enum class AIsoMode { Auto, Fixed, Free };

struct AIsoChoice {
  AIsoMode mode = AIsoMode::Auto;
  double value = 0.0;  // Hz, for Fixed

  /// "auto", "free" or a number in kHz. Throws InputError otherwise.
  static AIsoChoice parse(const std::string& s);
};

struct NucleusOptions {
  std::string label;
  AIsoChoice a_iso;
  double threshold_radius = 10 * kAngstrom;
};

struct PipelineConfig {
  PhysicalConstants constants{};
  FrameRegistry frames;
  std::string sensor_frame = kTargetFrame;
  std::optional<std::string> measurements_file;
  std::optional<std::string> odmr_file;
  std::optional<std::string> truth_file;
  std::optional<std::string> dft_file;
  std::vector<NucleusOptions> nuclei;
  FitOptions fit{};
  McConfig mc{};
  double z_offset = 2.29 * kAngstrom;
  std::size_t cost_curve_points = 720;
  std::size_t histogram_bins = 0;  // 0: sqrt of the sample count
  std::size_t threads = 1;
  std::string output_dir = "nvloc-out";
  int verbosity = 1;

  /// Command-line override of every nucleus' a_iso treatment.
  std::optional<AIsoChoice> a_iso_override;

  /// Relative input paths resolve against base_dir. Unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static PipelineConfig load(const std::string& path);

  /// Everything that affects numbers; omits threads, output_dir and verbosity.
  [[nodiscard]] nlohmann::json to_json() const;

  /// Throws InputError on duplicate nucleus labels or unknown sensor frame.
  void validate() const;
};

// ---- measurement files ------------------------------------------------------

struct MeasurementSet {
  std::vector<NucleusData> nuclei;  // fields already in the sensor frame
  std::vector<std::string> warnings;
};

/// "nvloc-measurements 1" text format; see docs/FORMATS.md. kHz, us, mT at the boundary.
MeasurementSet read_measurements(std::istream& in, const FrameRegistry& frames,
                                 const std::string& sensor_frame = kTargetFrame);
void write_measurements(std::ostream& out, const MeasurementSet& set, const std::string& sensor_frame = kTargetFrame);

// ---- truth files ------------------------------------------------------------

struct TruthNucleus {
  std::string label;
  SphericalPosition position;
  double a_iso = 0.0;  // Hz
};

struct TruthCoil {
  std::string label;
  Eigen::Vector3d dB = Eigen::Vector3d::Zero();  // T, sensor frame
};

struct TraceSpec {
  double duration = 2e-3;  // s
  double dt = 1e-6;        // s
  double noise = 0.1;      // per point, tone amplitudes are 1
};

struct TruthSet {
  std::uint64_t seed = 1;
  Eigen::Vector3d B0 = Eigen::Vector3d::Zero();  // T, sensor frame
  std::vector<TruthCoil> coils;
  std::vector<TruthNucleus> nuclei;
  double sigma_f = 100.0;       // Hz, f0 and f_m1
  double sigma_fR = 100.0;      // Hz
  double sigma_fp = 200.0;      // Hz, coil-on lines
  double sigma_field = 15e-6;   // T, per component
  bool noise = false;           // perturb every value by its sigma
  std::optional<TraceSpec> trace;
};

/// "nvloc-truth 1" text format; see docs/FORMATS.md.
TruthSet read_truth(std::istream& in, const FrameRegistry& frames, const std::string& sensor_frame = kTargetFrame);
void write_truth(std::ostream& out, const TruthSet& truth);

struct NucleusFailure {
  std::string label;
  std::string message;
};

struct SimulationResult {
  MeasurementSet set;
  std::vector<NucleusFailure> failures;
  std::vector<std::pair<std::string, TimeTrace>> traces;  // file stem, trace
};

/// Forward model for every nucleus of the truth set. With a trace spec the frequencies
/// (and their sigmas) come from fitting synthetic time traces.
SimulationResult simulate(const TruthSet& truth, const PipelineConfig& cfg);

// ---- commands ---------------------------------------------------------------

struct CommandResult {
  int exit_code = 0;
  nlohmann::json report;
  std::string text;
  std::vector<std::string> files;  // written, relative to the output directory
};

/// Each command writes report.json and report.txt plus its data files into
/// cfg.output_dir (atomically) and returns the report. Input errors propagate as
/// exceptions; per-nucleus numerical failures are reported with exit code 1.
CommandResult cmd_calibrate(const std::string& odmr_file, const PipelineConfig& cfg);
CommandResult cmd_localize(const std::string& measurements_file, const PipelineConfig& cfg);
CommandResult cmd_simulate(const std::string& truth_file, const PipelineConfig& cfg,
                           std::optional<std::uint64_t> seed_override = std::nullopt, bool write_traces = false);
CommandResult cmd_dft_residuals(const std::string& table_file, const PipelineConfig& cfg);

/// 2 for InputError (and JSON parse errors), 1 for the other library errors.
int exit_code_for(const std::exception& e);

}  // namespace nvloc
