#pragma once

#include <numbers>

namespace nvloc {

/// Physical constants. Gyromagnetic ratios and D are ordinary frequencies
/// (Hz/T and Hz); only gamma_n may differ from the defaults.
struct PhysicalConstants {
  double mu0 = 4.0 * std::numbers::pi * 1e-7;  // T m / A
  double hbar = 1.054e-34;                      // J s
  double gamma_e = 28e9;                        // Hz / T
  double gamma_n = 10.705e6;                    // Hz / T, 13C
  double D = 2.87e9;                            // Hz

  /// Dipolar prefactor b(r) * r^3 in Hz m^3, i.e. mu0 gamma_e gamma_n hbar / (4 pi r^3)
  /// with angular gyromagnetic ratios, divided by 2 pi.
  [[nodiscard]] double dipolar_constant() const {
    return mu0 / (4.0 * std::numbers::pi) * 2.0 * std::numbers::pi * hbar * gamma_e * gamma_n;
  }

  /// Throws DomainError when gamma_n leaves [10.6, 10.8] MHz/T or a fixed constant was altered.
  void validate() const;

  /// Defaults with a custom nuclear gyromagnetic ratio.
  static PhysicalConstants with_gamma_n(double gamma_n);
};

inline constexpr double kAngstrom = 1e-10;
inline constexpr double kMilliTesla = 1e-3;
inline constexpr double kMicroTesla = 1e-6;
inline constexpr double kKiloHertz = 1e3;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle into [0, 2 pi).
double wrap_two_pi(double angle);

/// Wraps an angle into (-pi, pi].
double wrap_pi(double angle);

}  // namespace nvloc
