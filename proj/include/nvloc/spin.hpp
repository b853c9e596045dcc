#pragma once

#include <string>

#include <Eigen/Dense>

#include "nvloc/constants.hpp"
#include "nvloc/dipole.hpp"
#include "nvloc/frames.hpp"

namespace nvloc {

enum class EnhancementVariant { LowField, GeneralField };

std::string to_string(EnhancementVariant v);
EnhancementVariant enhancement_variant_from_string(const std::string& s);

/// Nuclear g-factor enhancement alpha(m_S); dimensionless, bottom row zero.
struct EnhancementTensor {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Zero();
  EnhancementVariant variant = EnhancementVariant::GeneralField;
  int m_s = 0;
};

/// Enhancement from the top two rows of the hyperfine tensor.
///
/// Low-field:     (3|m|-2) gamma_e / (gamma_n D) * A_top
/// General-field: ((3|m|-2) D + m gamma_e B0z) / (D^2 - (gamma_e B0z)^2) * gamma_e / gamma_n * A_top
///
/// With every coupling and D in Hz the ratios are the same as with angular
/// frequencies, so no 2 pi factors appear. Throws DomainError at gamma_e B0z = D
/// (general variant).
EnhancementTensor enhancement(const HyperfineModel& hf, int m_s, double B0z,
                              EnhancementVariant variant = EnhancementVariant::GeneralField,
                              const PhysicalConstants& c = {});

/// Same as `enhancement` on a raw tensor, returning only the matrix.
Eigen::Matrix3d enhancement_matrix(const Eigen::Matrix3d& tensor, int m_s, double B0z, EnhancementVariant variant,
                                   const PhysicalConstants& c);

/// Nuclear precession frequency (Hz) in the sensor frame:
///   || -gamma_n B0 - gamma_n (1 + alpha(m_S)) dB + m_S A_z ||
/// B0 is the full static field (its z component drives alpha); alpha multiplies only dB.
/// m_S must be 0 or -1.
double precession_frequency(const Vector3& B0, const Vector3& dB, const HyperfineModel& hf, int m_s,
                            EnhancementVariant variant = EnhancementVariant::GeneralField,
                            const PhysicalConstants& c = {});

/// Untagged kernel used by the fitting loops.
double precession_frequency_raw(const Eigen::Vector3d& B0, const Eigen::Vector3d& dB, const Eigen::Matrix3d& tensor,
                                int m_s, EnhancementVariant variant, const PhysicalConstants& c);

/// Two |0> <-> |-+1>-like transition frequencies of one NV, ascending.
struct OdmrLinePair {
  double f_minus = 0.0;
  double f_plus = 0.0;
};

/// H = D Sz^2 + gamma_e B.S in Hz, basis |+1>, |0>, |-1>. B in the NV frame.
Eigen::Matrix3cd spin1_hamiltonian(const Eigen::Vector3d& B_nv, const PhysicalConstants& c = {});

struct Spin1Spectrum {
  Eigen::Vector3d energies;        // ascending, Hz
  Eigen::Matrix3cd states;         // columns
  int zero_like = 0;               // index of the eigenstate with the largest |0> weight
  OdmrLinePair lines;
  /// d(line)/d(B_nv) rows for f_minus, f_plus (Hz/T), from Hellmann-Feynman.
  Eigen::Matrix<double, 2, 3> gradient = Eigen::Matrix<double, 2, 3>::Zero();
};

Spin1Spectrum spin1_spectrum(const Eigen::Vector3d& B_nv, const PhysicalConstants& c = {});

/// ODMR lines of an NV in `frame` for a lab-frame field B. Throws InputError if B is not tagged "lab".
OdmrLinePair odmr_lines(const Vector3& B, const Frame& frame, const PhysicalConstants& c = {});

}  // namespace nvloc
