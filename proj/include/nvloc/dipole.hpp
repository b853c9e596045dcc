#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvloc/constants.hpp"

namespace nvloc {

/// Nuclear position in the sensor frame: r in m, theta in [0, pi/2], phi in [0, 2 pi).
struct SphericalPosition {
  double r = 0.0;
  double theta = 0.0;
  double phi = 0.0;
  bool phi_determined = true;

  [[nodiscard]] Eigen::Vector3d cartesian() const;
};

/// Hyperfine tensor and its secular scalars, all in Hz.
struct HyperfineModel {
  Eigen::Matrix3d tensor = Eigen::Matrix3d::Zero();
  Eigen::Vector3d secular_vector = Eigen::Vector3d::Zero();  // (A_xz, A_yz, A_zz)
  double a_par = 0.0;
  double a_perp = 0.0;
  double a_iso = 0.0;

  /// Builds the derived fields from a symmetric tensor.
  static HyperfineModel from_tensor(const Eigen::Matrix3d& tensor, double a_iso = 0.0);
};

struct DipoleOptions {
  double min_radius = 1.0 * kAngstrom;
};

/// Point-dipole tensor A_ij = b(r) (3 n_i n_j - delta_ij) + a_iso delta_ij with b(r) in Hz.
/// Throws DomainError for r below options.min_radius.
HyperfineModel dipole_tensor(const SphericalPosition& pos, double a_iso, const PhysicalConstants& c = {},
                             const DipoleOptions& opt = {});

/// b(r) in Hz.
double dipolar_strength(double r, const PhysicalConstants& c = {});

/// Recovers (r, theta) from (a_par, a_perp, a_iso). phi is left undetermined.
/// theta is canonicalized to the upper hemisphere [0, pi/2].
SphericalPosition invert_dipole(double a_par, double a_perp, double a_iso, const PhysicalConstants& c = {});

/// One row of a DFT hyperfine table; couplings in Hz, angles in rad.
struct DftRow {
  double a_par = 0.0;
  double a_perp = 0.0;
  std::optional<double> a_iso;
  double r_dft = 0.0;
  double theta_dft = 0.0;
};

struct DftResidual {
  double r_dft = 0.0;
  double theta_dft = 0.0;  // canonicalized to [0, pi/2]
  double r_inverted = 0.0;
  double theta_inverted = 0.0;
  double dr = 0.0;
  double dtheta = 0.0;
};

struct DftBin {
  double r_low = 0.0;
  double r_high = 0.0;
  std::size_t count = 0;
  double median_dr = 0.0;
  double median_dtheta = 0.0;
};

struct DftRowError {
  std::size_t row = 0;  // 1-based line number in the source, or index + 1
  std::string message;
};

struct DftResidualReport {
  std::vector<DftResidual> rows;
  std::vector<DftBin> bins;
  std::vector<DftRowError> errors;
};

/// Point-dipole inversion of every row compared with its DFT position, plus
/// median residuals over radial bins of width `bin_width` (m).
DftResidualReport dft_residual_map(const std::vector<DftRow>& table, const PhysicalConstants& c = {},
                                   double bin_width = 2.0 * kAngstrom);

/// Parses a delimiter-separated table with header
/// a_par_kHz, a_perp_kHz, [a_iso_kHz,] r_A, theta_deg. Comma, tab or whitespace delimited.
/// Malformed rows are collected in `errors` instead of aborting.
std::vector<DftRow> read_dft_table(std::istream& in, std::vector<DftRowError>& errors);

/// Writes per-row residuals followed by a binned-median summary block.
void write_dft_report(std::ostream& out, const DftResidualReport& report);

}  // namespace nvloc
