#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nvloc/errors.hpp"
#include "nvloc/extract.hpp"
#include "nvloc/random.hpp"

namespace nvloc {

using std::numbers::pi;

double nominal_tau(double f0, double f_m1) { return 1.0 / (2.0 * (f0 + f_m1)); }

CouplingEstimate extract_couplings(double f0, double f_m1, double fR, double tau, CouplingMethod method,
                                   const ExtractOptions& opt) {
  if (!(f0 > 0.0) || !(f_m1 > 0.0)) throw DomainError("extract_couplings needs f0 > 0 and f_m1 > 0");
  if (!(fR > 0.0)) throw DomainError("extract_couplings needs fR > 0");
  if (!(tau > 0.0)) throw DomainError("extract_couplings needs tau > 0");

  CouplingEstimate est;
  est.method = method;
  const double ratio = tau / nominal_tau(f0, f_m1);
  if (ratio > opt.tau_tolerance_factor || ratio < 1.0 / opt.tau_tolerance_factor) {
    std::ostringstream os;
    os << "tau is " << ratio << "x the nominal [2(f0+f_m1)]^-1 spacing";
    est.warnings.push_back(os.str());
  }

  if (method == CouplingMethod::Approximate) {
    est.a_par.value = f_m1 - f0;
    est.a_perp.value = pi * fR;
    return est;
  }

  const double period = 2.0 * tau;
  const double a = pi * f_m1 * period;
  const double b = pi * f0 * period;
  const double denom = std::sin(a) * std::sin(b);
  if (std::abs(denom) < 1e-12) throw DomainError("tau places a precession phase at a multiple of pi");
  const double a_par = f_m1 * (std::cos(a) * std::cos(b) - std::cos(pi - 2.0 * pi * fR * period)) / denom - f0;
  const double q = f_m1 * f_m1 - (f0 + a_par) * (f0 + a_par);
  if (!(q >= 0.0)) {
    std::ostringstream os;
    os << "inconsistent inputs: a_perp^2 = " << q << " Hz^2 < 0 (peaks mis-identified?)";
    throw DomainError(os.str());
  }
  est.a_par.value = a_par;
  est.a_perp.value = std::sqrt(q);
  return est;
}

RabiTriplet forward_triplet(double a_par, double a_perp, double f_larmor, double tau) {
  if (!(f_larmor > 0.0) || !(a_perp >= 0.0)) throw DomainError("forward_triplet needs f_larmor > 0, a_perp >= 0");
  RabiTriplet out;
  out.f0 = f_larmor;
  out.f_m1 = std::hypot(f_larmor + a_par, a_perp);
  out.tau = tau > 0.0 ? tau : nominal_tau(out.f0, out.f_m1);
  const double period = 2.0 * out.tau;
  const double a = pi * out.f_m1 * period;
  const double b = pi * out.f0 * period;
  const double cos_half = std::cos(a) * std::cos(b) - ((f_larmor + a_par) / out.f_m1) * std::sin(a) * std::sin(b);
  const double rot = pi - std::acos(std::clamp(cos_half, -1.0, 1.0));
  out.fR = rot / (2.0 * pi * period);
  return out;
}

CouplingSigmaResult propagate_coupling_sigma(const Measured& f0, const Measured& f_m1, const Measured& fR, double tau,
                                             std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 10000) throw DomainError("propagate_coupling_sigma needs at least 10^4 samples");
  if (f0.sigma < 0.0 || f_m1.sigma < 0.0 || fR.sigma < 0.0) throw DomainError("sigmas must be non-negative");
  CouplingSigmaResult out;
  out.estimate = extract_couplings(f0.value, f_m1.value, fR.value, tau);
  out.n_samples = n_samples;

  const CounterNormal normal(seed);
  double mean_par = 0.0, mean_perp = 0.0, m2_par = 0.0, m2_perp = 0.0;
  std::size_t n_ok = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double s0 = f0.value + f0.sigma * normal(0, i);
    const double s1 = f_m1.value + f_m1.sigma * normal(1, i);
    const double sR = fR.value + fR.sigma * normal(2, i);
    try {
      const auto e = extract_couplings(s0, s1, sR, tau);
      ++n_ok;
      const double d1 = e.a_par.value - mean_par;
      mean_par += d1 / static_cast<double>(n_ok);
      m2_par += d1 * (e.a_par.value - mean_par);
      const double d2 = e.a_perp.value - mean_perp;
      mean_perp += d2 / static_cast<double>(n_ok);
      m2_perp += d2 * (e.a_perp.value - mean_perp);
    } catch (const DomainError&) {
      ++out.n_failed;
    }
  }
  if (static_cast<double>(out.n_failed) > 0.01 * static_cast<double>(n_samples)) {
    throw ConvergenceError("coupling propagation: " + std::to_string(out.n_failed) + " of " +
                           std::to_string(n_samples) + " draws were inconsistent (> 1%)");
  }
  if (n_ok > 1) {
    out.estimate.a_par.sigma = std::sqrt(m2_par / static_cast<double>(n_ok - 1));
    out.estimate.a_perp.sigma = std::sqrt(m2_perp / static_cast<double>(n_ok - 1));
  }
  return out;
}

}  // namespace nvloc
