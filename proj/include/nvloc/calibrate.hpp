#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvloc/constants.hpp"
#include "nvloc/frames.hpp"
#include "nvloc/spin.hpp"

namespace nvloc {

enum class FieldContext { CoilField, BiasField };
std::string to_string(FieldContext c);

/// Both ODMR lines of one NV centre, Hz.
struct OdmrEntry {
  std::string nv_id;
  std::string frame;
  OdmrLinePair lines;
  double sigma_minus = 0.0;
  double sigma_plus = 0.0;
};

struct OdmrDataset {
  std::vector<OdmrEntry> entries;
  FieldContext context = FieldContext::CoilField;
  /// Lab-frame direction used to pick between B and -B, which give identical spectra.
  std::optional<Eigen::Vector3d> sign_reference;

  /// Throws InputError on non-positive sigmas or lines, unknown frames, duplicate ids.
  void validate(const FrameRegistry& frames) const;
};

struct FieldSolution {
  Vector3 B{0.0, 0.0, 0.0, kLabFrame};
  Eigen::Vector3d sigma = Eigen::Vector3d::Zero();  // T, lab components
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // T^2, lab
  std::vector<double> residuals;                    // Hz, measured - model, two per entry
  double residual_rms = 0.0;                        // Hz
  double mirrored_residual_rms = 0.0;               // Hz, the -B branch
  double chi2 = 0.0;
  std::size_t dof = 0;
  double condition = 0.0;                           // of the weighted Jacobian
  int iterations = 0;
  std::vector<std::string> warnings;
};

struct CalibrateOptions {
  PhysicalConstants constants{};
  int max_iterations = 200;
  double max_condition = 1e8;
};

/// Least-squares field in the lab frame from the ODMR lines of several NV orientations.
/// Starts from the aligned-field linearization of every frame (all projection sign
/// patterns) plus the optional initial guess. The sign of B is taken from the initial
/// guess, else the dataset's sign_reference, else lab +z.
/// Throws IdentifiabilityError when fewer than two distinct NV axes are present or the
/// Jacobian is ill-conditioned, ConvergenceError when the solver fails.
FieldSolution solve_field(const OdmrDataset& dataset, const FrameRegistry& frames,
                          const std::optional<Vector3>& initial_guess = std::nullopt, const CalibrateOptions& opt = {});

struct AlignmentReport {
  double transverse = 0.0;  // T
  double tilt = 0.0;        // rad
  bool pass = false;
};

/// Transverse field and tilt of B relative to the target NV axis.
AlignmentReport alignment_report(const Vector3& B_lab, const Frame& target, double threshold = 50e-6);
AlignmentReport alignment_report(const FieldSolution& solution, const Frame& target, double threshold = 50e-6);

/// Noise-free (noise_sigma = 0) or noisy ODMR lines of the listed frames for field B_lab.
OdmrDataset synth_odmr(const Vector3& B_lab, const std::vector<std::string>& frame_names, const FrameRegistry& frames,
                       double line_sigma, double noise_sigma, std::uint64_t seed, const PhysicalConstants& c = {});

/// One resonance per line: nv_id frame f_GHz sigma_MHz. Directives:
///   context coil-field|bias-field
///   sign_reference x y z
/// '#' starts a comment. Errors carry the line number.
OdmrDataset read_odmr(std::istream& in, const FrameRegistry& frames);
void write_odmr(std::ostream& out, const OdmrDataset& dataset);

}  // namespace nvloc
