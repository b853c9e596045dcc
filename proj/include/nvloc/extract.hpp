#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nvloc/measured.hpp"

namespace nvloc {

enum class CouplingMethod { Approximate, Exact };

/// Secular couplings in Hz.
struct CouplingEstimate {
  Measured a_par;
  Measured a_perp;
  CouplingMethod method = CouplingMethod::Exact;
  std::vector<std::string> warnings;
};

struct ExtractOptions {
  /// Warn when tau deviates from [2 (f0 + f_m1)]^-1 by more than this factor either way.
  double tau_tolerance_factor = 1.5;
};

/// Nominal CPMG pulse spacing [2 (f0 + f_m1)]^-1.
double nominal_tau(double f0, double f_m1);

/// Couplings from the free-precession pair (f0, f_m1), the Rabi frequency fR and
/// the CPMG pulse spacing tau.
///
/// Exact method: with cell period T = 2 tau (tau/2 - pi - tau - pi - tau/2, so the
/// nucleus spends T/2 in each m_S state),
///   a_par  = f_m1 (cos(pi f_m1 T) cos(pi f0 T) - cos(pi - 2 pi fR T)) / (sin(pi f_m1 T) sin(pi f0 T)) - f0
///   a_perp = sqrt(f_m1^2 - (f0 + a_par)^2)
/// Approximate method: a_par = f_m1 - f0, a_perp = pi fR.
/// f_m1 < f0 is accepted; it is the normal outcome for strongly negative a_par.
/// Throws DomainError on a negative square-root argument (mis-identified peaks) or
/// violated preconditions. Sigmas in the result are zero; see propagate_coupling_sigma.
CouplingEstimate extract_couplings(double f0, double f_m1, double fR, double tau,
                                   CouplingMethod method = CouplingMethod::Exact, const ExtractOptions& opt = {});

struct RabiTriplet {
  double f0 = 0.0;
  double f_m1 = 0.0;
  double fR = 0.0;
  double tau = 0.0;
};

/// Forward relation: the (f0, f_m1, fR) an aligned-field experiment would measure for
/// couplings (a_par, a_perp) at Larmor frequency f_larmor. tau <= 0 selects nominal_tau.
/// fR is taken on the branch 2 pi fR T in (0, pi).
RabiTriplet forward_triplet(double a_par, double a_perp, double f_larmor, double tau = 0.0);

struct CouplingSigmaResult {
  CouplingEstimate estimate;  // central values from the unperturbed inputs
  std::size_t n_samples = 0;
  std::size_t n_failed = 0;
};

/// Monte Carlo sigmas of the exact transform: sample standard deviations over
/// n_samples (>= 10^4) normal draws of (f0, f_m1, fR). Throws ConvergenceError if more
/// than 1% of the draws are inconsistent.
CouplingSigmaResult propagate_coupling_sigma(const Measured& f0, const Measured& f_m1, const Measured& fR, double tau,
                                             std::size_t n_samples = 10000, std::uint64_t seed = 1);

}  // namespace nvloc
