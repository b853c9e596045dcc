#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvloc/constants.hpp"
#include "nvloc/dipole.hpp"
#include "nvloc/extract.hpp"
#include "nvloc/frames.hpp"
#include "nvloc/measured.hpp"
#include "nvloc/spin.hpp"

namespace nvloc {

/// One coil configuration for one nucleus. Frequencies in Hz, fields in T, sensor frame.
struct MeasurementRecord {
  std::string label;
  Measured f0;     // aligned field, m_S = 0
  Measured f_m1;   // aligned field, m_S = -1
  Measured fp0;    // coil on, m_S = 0
  Measured fp_m1;  // coil on, m_S = -1
  Vector3 B0;
  Eigen::Vector3d B0_sigma = Eigen::Vector3d::Zero();
  Vector3 dB;
  Eigen::Vector3d dB_sigma = Eigen::Vector3d::Zero();

  /// Throws InputError on negative sigmas or B0 and dB in different frames.
  /// f_m1 may lie below f0: that happens for a_par < -(a_par^2 + a_perp^2) / (2 f0).
  void validate() const;
};

/// Everything measured for one nucleus: the aligned-field triplet and the coil-on records.
struct NucleusData {
  std::string label;
  Measured f0;
  Measured f_m1;
  Measured fR;
  double tau = 0.0;  // CPMG pulse spacing, s
  std::vector<MeasurementRecord> records;
  std::optional<double> fix_a_iso;  // Hz
};

enum class CostMode { Difference, Absolute };

struct FitOptions {
  std::optional<double> fix_a_iso;           // Hz; absent -> joint (phi, a_iso) fit
  double phi_step = deg2rad(0.5);
  double a_iso_range = 100e3;                // Hz, scan over [-range, +range]
  double a_iso_step = 1e3;                   // Hz
  double degenerate_factor = 2.0;
  double degenerate_floor = 10.0;            // Hz per record, added as n * floor^2 to the threshold
  std::size_t max_refinements = 16;
  double identifiability_threshold = 0.1e-6; // T, transverse |dB|
  EnhancementVariant variant = EnhancementVariant::GeneralField;
  CostMode mode = CostMode::Difference;
  PhysicalConstants constants{};
};

struct CostMinimum {
  double phi = 0.0;
  double a_iso = 0.0;
  double cost = 0.0;  // Hz^2
};

struct AzimuthFit {
  double phi = 0.0;       // [0, 2 pi)
  double a_iso = 0.0;     // Hz
  double residual = 0.0;  // sqrt(sum xi^2), Hz
  bool a_iso_fixed = false;
  std::vector<double> per_record_xi;
  std::vector<double> degenerate_minima;  // phi of every minimum within the degeneracy band
  std::vector<CostMinimum> minima;        // refined minima, best first
};

/// Cost term for one record: measured minus predicted coil-on splitting (Hz).
double xi(const MeasurementRecord& record, const CouplingEstimate& coupling, double phi, double a_iso,
          EnhancementVariant variant = EnhancementVariant::GeneralField, const PhysicalConstants& c = {});

/// Global minimum of sum xi^2 over phi (and a_iso unless fixed): dense grid, then
/// Levenberg-Marquardt refinement of the best grid minima. Ties within 1e-9 go to the
/// smallest phi. Throws IdentifiabilityError when no record has a transverse coil field.
AzimuthFit fit_azimuth(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling,
                       const FitOptions& opt = {});

/// Refinement from given starting minima only (no grid). Used for Monte Carlo resamples.
AzimuthFit refine_azimuth(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling,
                          const std::vector<CostMinimum>& seeds, const FitOptions& opt = {});

/// sum xi^2 over records on a phi grid at fixed a_iso; columns are per-record |xi| then the sum of squares.
Eigen::MatrixXd cost_curve(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling,
                           double a_iso, std::size_t n_points, const FitOptions& opt = {});

struct LocatedNucleus {
  SphericalPosition position;
  Eigen::Vector3d cartesian = Eigen::Vector3d::Zero();  // m, shifted by the reporting offset along +z
};

/// (r, theta) by point-dipole inversion with the fitted a_iso, phi from the fit.
LocatedNucleus assemble_position(const CouplingEstimate& coupling, const AzimuthFit& fit,
                                 double z_offset = 2.29 * kAngstrom, const PhysicalConstants& c = {});

/// a_iso = 0 when the point-dipole radius exceeds `threshold_radius`, otherwise nothing.
std::optional<double> default_fix_a_iso(const CouplingEstimate& coupling, double threshold_radius = 10 * kAngstrom,
                                        const PhysicalConstants& c = {});

}  // namespace nvloc
