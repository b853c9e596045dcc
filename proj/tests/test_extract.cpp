#include <random>

#include "doctest.h"
#include "nvloc/errors.hpp"
#include "nvloc/extract.hpp"
#include "oracles.hpp"

using namespace nvloc;
using doctest::Approx;

namespace {

// Forward relation written out independently: the nucleus spends T = 2 tau in
// each electron state per cell, split symmetrically around the m=-1 interval. The
// net nuclear rotation angle of the cell gives the Rabi frequency per cell.
struct Su2 {
  std::complex<double> a, b;  // [[a, -conj b], [b, conj a]]
};
Su2 mul(const Su2& x, const Su2& y) {
  return {x.a * y.a - std::conj(x.b) * y.b, x.b * y.a + std::conj(x.a) * y.b};
}
Su2 precess(const Eigen::Vector3d& w, double t) {  // exp(-i pi t w.sigma), w in Hz
  const double n = w.norm();
  if (n == 0) return {1.0, 0.0};
  const Eigen::Vector3d u = w / n;
  const double h = oracle::pi * n * t;
  const std::complex<double> I(0, 1);
  return {std::cos(h) - I * std::sin(h) * u[2], -I * std::sin(h) * (u[0] + I * u[1])};
}
double oracle_fR(double a_par, double a_perp, double fl, double tau) {
  const double T = 2 * tau;
  const Eigen::Vector3d w0(0, 0, fl), w1(a_perp, 0, fl + a_par);
  const Su2 u = mul(mul(precess(w0, T / 2), precess(w1, T)), precess(w0, T / 2));
  const double half = std::acos(std::clamp(u.a.real(), -1.0, 1.0));  // rotation angle / 2
  // net rotation per cell of duration 2T, measured from a full turn
  return (oracle::pi - half) / (2 * oracle::pi * T);
}

}  // namespace

TEST_CASE("forward relation agrees with a spinor composition") {
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 200; ++k) {
    const double fl = 50e3 + 100e3 * u(g);
    const double ap = (u(g) - 0.5) * 20e3, at = 5e3 + 40e3 * u(g);
    const RabiTriplet t = forward_triplet(ap, at, fl);
    CHECK(t.f0 == Approx(fl));
    CHECK(t.f_m1 == Approx(std::hypot(fl + ap, at)).epsilon(1e-14));
    CHECK(t.tau == Approx(nominal_tau(t.f0, t.f_m1)));
    const double o = std::abs(oracle_fR(ap, at, fl, t.tau));
    CHECK(t.fR == Approx(o).epsilon(1e-9));
  }
}

TEST_CASE("exact extraction inverts the forward relation") {
  std::mt19937_64 g(23);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 500; ++k) {
    const double fl = 50e3 + 100e3 * u(g);
    const double ap = (u(g) - 0.5) * 40e3, at = 2e3 + 60e3 * u(g);
    const double tau = nominal_tau(fl, std::hypot(fl + ap, at)) * (0.8 + 0.4 * u(g));
    const RabiTriplet t = forward_triplet(ap, at, fl, tau);
    const CouplingEstimate c = extract_couplings(t.f0, t.f_m1, t.fR, t.tau);
    CHECK(c.a_par.value == Approx(ap).epsilon(1e-9).scale(at));
    CHECK(c.a_perp.value == Approx(at).epsilon(1e-9));
    CHECK(c.method == CouplingMethod::Exact);
  }
}

TEST_CASE("approximate method and weak-coupling limit") {
  const CouplingEstimate a = extract_couplings(101.7e3, 114.2e3, 14.4e3, 1e-6, CouplingMethod::Approximate);
  CHECK(a.a_par.value == Approx(12.5e3));
  CHECK(a.a_perp.value == Approx(oracle::pi * 14.4e3));

  // f0 = 100 (f_m1 - f0)
  const RabiTriplet t = forward_triplet(1e3, 0.1e3, 100e3);
  CHECK(t.f0 / (t.f_m1 - t.f0) == Approx(100).epsilon(1e-3));
  const CouplingEstimate ex = extract_couplings(t.f0, t.f_m1, t.fR, t.tau);
  const CouplingEstimate ap = extract_couplings(t.f0, t.f_m1, t.fR, t.tau, CouplingMethod::Approximate);
  CHECK(ap.a_par.value == Approx(ex.a_par.value).epsilon(0.01));

  // disagreement shrinks monotonically as a / f0 falls below 0.1
  double prev = 1e300;
  for (double ratio : {0.1, 0.05, 0.02, 0.01, 0.005}) {
    const double fl = 100e3, apar = ratio * fl, aperp = 0.5 * ratio * fl;
    const RabiTriplet s = forward_triplet(apar, aperp, fl);
    const double e = extract_couplings(s.f0, s.f_m1, s.fR, s.tau).a_par.value;
    const double p = extract_couplings(s.f0, s.f_m1, s.fR, s.tau, CouplingMethod::Approximate).a_par.value;
    const double rel = std::abs(p - e) / std::abs(e);
    CHECK(rel < prev);
    prev = rel;
  }
}

TEST_CASE("inconsistent triplets and bad inputs") {
  // a Rabi frequency the couplings cannot produce
  CHECK_THROWS_AS(extract_couplings(101.7e3, 114.2e3, 2e3, 0.9 * nominal_tau(101.7e3, 114.2e3)), DomainError);
  CHECK_THROWS_AS(extract_couplings(101.7e3, -114.2e3, 14.4e3, 2e-6), DomainError);
  // strongly negative a_par puts f_m1 below f0
  const RabiTriplet low = forward_triplet(-18e3, 10e3, 100e3);
  CHECK(low.f_m1 < low.f0);
  const CouplingEstimate lc = extract_couplings(low.f0, low.f_m1, low.fR, low.tau);
  CHECK(lc.a_par.value == Approx(-18e3).epsilon(1e-9));
  CHECK(lc.a_perp.value == Approx(10e3).epsilon(1e-9));
  CHECK_THROWS_AS(extract_couplings(101.7e3, 114.2e3, 0.0, 2e-6), DomainError);
  CHECK_THROWS_AS(extract_couplings(101.7e3, 114.2e3, 14.4e3, 0.0), DomainError);
  CHECK_THROWS_AS(extract_couplings(0.0, 114.2e3, 14.4e3, 2e-6), DomainError);
}

TEST_CASE("tau far from nominal warns") {
  const double tau = nominal_tau(101.7e3, 114.2e3);
  CHECK(extract_couplings(101.7e3, 114.2e3, 14.4e3, tau).warnings.empty());
  const RabiTriplet t = forward_triplet(3e3, 44e3, 101.7e3, 2.0 * tau);
  const CouplingEstimate c = extract_couplings(t.f0, t.f_m1, t.fR, t.tau);
  CHECK(c.warnings.size() == 1);
}

TEST_CASE("sigma propagation") {
  const double tau = nominal_tau(101.7e3, 114.2e3);
  const auto z = propagate_coupling_sigma({101.7e3, 0}, {114.2e3, 0}, {14.4e3, 0}, tau);
  CHECK(z.estimate.a_par.sigma == 0.0);
  CHECK(z.estimate.a_perp.sigma == 0.0);

  const auto one = propagate_coupling_sigma({101.7e3, 100}, {114.2e3, 100}, {14.4e3, 100}, tau, 20000, 3);
  MESSAGE("sigma a_par = " << one.estimate.a_par.sigma << " Hz, a_perp = " << one.estimate.a_perp.sigma << " Hz");
  CHECK(one.estimate.a_par.sigma > 100);
  CHECK(one.estimate.a_par.sigma < 300);
  CHECK(one.n_failed == 0);
  CHECK(one.n_samples == 20000);

  const auto two = propagate_coupling_sigma({101.7e3, 200}, {114.2e3, 200}, {14.4e3, 200}, tau, 20000, 3);
  CHECK(two.estimate.a_par.sigma / one.estimate.a_par.sigma == Approx(2.0).epsilon(0.05));
  CHECK(two.estimate.a_perp.sigma / one.estimate.a_perp.sigma == Approx(2.0).epsilon(0.05));

  CHECK_THROWS_AS(propagate_coupling_sigma({101.7e3, 100}, {114.2e3, 100}, {14.4e3, 100}, tau, 100), DomainError);
  // a Rabi frequency indistinguishable from zero makes many draws fail
  CHECK_THROWS_AS(propagate_coupling_sigma({101.7e3, 100}, {114.2e3, 100}, {0.3e3, 1e3}, tau, 10000, 1),
                  ConvergenceError);
}
