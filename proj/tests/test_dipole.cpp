#include <random>
#include <sstream>

#include "doctest.h"
#include "nvloc/dipole.hpp"
#include "nvloc/errors.hpp"
#include "oracles.hpp"

using namespace nvloc;
using doctest::Approx;

namespace {
constexpr double kA = 1e-10;
double deg(double d) { return d * oracle::pi / 180.0; }
}  // namespace

TEST_CASE("tensor example near the c1 site") {
  const HyperfineModel hf = dipole_tensor({8.3 * kA, deg(58), 0.0}, 9e3);
  CHECK(hf.a_par == Approx(oracle::a_par(8.3 * kA, deg(58), 9e3)).epsilon(1e-12));
  CHECK(hf.a_perp == Approx(oracle::a_perp(8.3 * kA, deg(58))).epsilon(1e-12));
  CHECK(hf.a_par / 1e3 == Approx(3.5).epsilon(0.05));
  CHECK(hf.a_perp / 1e3 == Approx(46.8).epsilon(0.01));
}

TEST_CASE("on-axis and magic-angle tensors") {
  const double r = 7 * kA;
  const HyperfineModel ax = dipole_tensor({r, 0.0, 1.0}, 0.0);
  CHECK(ax.a_perp == Approx(0.0));
  CHECK(ax.a_par == Approx(2.0 * dipolar_strength(r)).epsilon(1e-14));
  const HyperfineModel m = dipole_tensor({r, std::acos(1 / std::sqrt(3.0)), 2.0}, 0.0);
  CHECK(std::abs(m.a_par) < 1e-12 * dipolar_strength(r));
}

TEST_CASE("tensor structure") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 200; ++k) {
    const SphericalPosition p{(2 + 20 * u(g)) * kA, oracle::pi * u(g), 2 * oracle::pi * u(g)};
    const double a_iso = (u(g) - 0.5) * 2e5;
    const HyperfineModel hf = dipole_tensor(p, a_iso);
    CHECK((hf.tensor - hf.tensor.transpose()).norm() == Approx(0.0));
    CHECK((hf.secular_vector - hf.tensor.col(2)).norm() == Approx(0.0));
    const double tr = (hf.tensor.trace() - 3 * a_iso);
    CHECK(std::abs(tr) < 1e-9 * hf.tensor.norm());
    CHECK(hf.a_perp >= 0.0);
    CHECK(hf.a_perp == Approx(std::hypot(hf.tensor(0, 2), hf.tensor(1, 2))));
    // A_z points along phi
    if (hf.a_perp > 1.0) {
      const double phi = std::atan2(hf.tensor(1, 2), hf.tensor(0, 2));
      const bool flipped = std::cos(p.theta) < 0;
      CHECK(std::abs(std::remainder(phi - p.phi - (flipped ? oracle::pi : 0.0), 2 * oracle::pi)) < 1e-9);
    }
  }
}

TEST_CASE("minimum radius guard") {
  CHECK_THROWS_AS(dipole_tensor({0.9 * kA, 0.3, 0}, 0), DomainError);
  DipoleOptions o;
  o.min_radius = 0.5 * kA;
  CHECK_NOTHROW(dipole_tensor({0.9 * kA, 0.3, 0}, 0, {}, o));
}

TEST_CASE("inversion matches a bisection oracle") {
  const SphericalPosition p = invert_dipole(3.1e3, 44.5e3, 0.0);
  const auto o = oracle::invert_bisect(3.1e3, 44.5e3, 0.0);
  CHECK(p.r == Approx(o.r).epsilon(1e-12));
  CHECK(p.theta == Approx(o.theta).epsilon(1e-12));
  CHECK_FALSE(p.phi_determined);
  const SphericalPosition q = invert_dipole(3.1e3, 44.5e3, 9e3);
  const auto oq = oracle::invert_bisect(3.1e3, 44.5e3, 9e3);
  CHECK(q.r == Approx(oq.r).epsilon(1e-12));
  CHECK(q.theta == Approx(oq.theta).epsilon(1e-12));
  // negative d: theta beyond the magic angle
  const SphericalPosition n = invert_dipole(-20e3, 10e3, 0.0);
  const auto on = oracle::invert_bisect(-20e3, 10e3, 0.0);
  CHECK(n.theta == Approx(on.theta).epsilon(1e-12));
  CHECK(n.r == Approx(on.r).epsilon(1e-12));
}

TEST_CASE("forward then inverse on random positions") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 1000; ++k) {
    const double r = (2 + 20 * u(g)) * kA;
    const double t = 1e-3 + (oracle::pi / 2 - 2e-3) * u(g);
    const double a_iso = (u(g) - 0.5) * 1e5;
    const HyperfineModel hf = dipole_tensor({r, t, 2 * oracle::pi * u(g)}, a_iso);
    const SphericalPosition p = invert_dipole(hf.a_par, hf.a_perp, a_iso);
    CHECK(p.r == Approx(r).epsilon(1e-9));
    CHECK(p.theta == Approx(t).epsilon(1e-9));
  }
}

TEST_CASE("hemisphere images invert to the same point") {
  for (double t : {0.2, 0.7, 1.1, 1.5}) {
    const HyperfineModel up = dipole_tensor({9 * kA, t, 1.0}, 0.0);
    const HyperfineModel down = dipole_tensor({9 * kA, oracle::pi - t, 1.0}, 0.0);
    const SphericalPosition a = invert_dipole(up.a_par, up.a_perp, 0.0);
    const SphericalPosition b = invert_dipole(down.a_par, down.a_perp, 0.0);
    CHECK(a.theta == Approx(b.theta).epsilon(1e-12));
    CHECK(a.r == Approx(b.r).epsilon(1e-12));
    CHECK(a.theta == Approx(t).epsilon(1e-9));
  }
}

TEST_CASE("r^-3 scaling") {
  const HyperfineModel a = dipole_tensor({6 * kA, 0.8, 0}, 5e3);
  const HyperfineModel b = dipole_tensor({12 * kA, 0.8, 0}, 5e3);
  CHECK((a.a_par - 5e3) / (b.a_par - 5e3) == Approx(8.0).epsilon(1e-13));
  CHECK(a.a_perp / b.a_perp == Approx(8.0).epsilon(1e-13));
}

TEST_CASE("axis cases and degenerate input") {
  const double b = dipolar_strength(10 * kA);
  const SphericalPosition on = invert_dipole(2 * b, 0.0, 0.0);
  CHECK(on.theta == Approx(0.0));
  CHECK(on.r == Approx(10 * kA).epsilon(1e-12));
  const SphericalPosition eq = invert_dipole(-b, 0.0, 0.0);
  CHECK(eq.theta == Approx(oracle::pi / 2));
  CHECK(eq.r == Approx(10 * kA).epsilon(1e-12));
  CHECK_THROWS_AS(invert_dipole(4e3, 0.0, 4e3), DomainError);
  CHECK_THROWS_AS(invert_dipole(4e3, -1.0, 0.0), DomainError);
}

TEST_CASE("dft residuals: self-consistent rows") {
  std::vector<DftRow> rows;
  for (double r : {5.0, 7.5, 9.0, 12.0}) {
    const HyperfineModel hf = dipole_tensor({r * kA, deg(40), 0}, 0);
    rows.push_back({hf.a_par, hf.a_perp, std::nullopt, r * kA, deg(140)});  // lower hemisphere label
  }
  const DftResidualReport rep = dft_residual_map(rows);
  REQUIRE(rep.rows.size() == 4);
  for (const auto& r : rep.rows) {
    CHECK(std::abs(r.dr) < 1e-9 * r.r_dft);
    CHECK(std::abs(r.dtheta) < 1e-9);
  }
  CHECK(rep.errors.empty());
  CHECK(dft_residual_map({}).rows.empty());
}

TEST_CASE("dft residuals: 5 percent coupling error gives cube-root radius error") {
  std::vector<DftRow> rows;
  for (double r : {6.0, 8.0, 10.0}) {
    const HyperfineModel hf = dipole_tensor({r * kA, deg(35), 0}, 0);
    rows.push_back({1.05 * hf.a_par, 1.05 * hf.a_perp, std::nullopt, r * kA, deg(35)});
  }
  for (const auto& r : dft_residual_map(rows).rows) {
    CHECK(r.dr / r.r_dft == Approx(std::pow(1.05, -1.0 / 3.0) - 1.0).epsilon(1e-9));
    CHECK(std::abs(r.dr / r.r_dft) == Approx(0.05 / 3).epsilon(0.05));
  }
}

TEST_CASE("dft table parsing collects row errors and bins medians") {
  std::istringstream in(
      "a_par_kHz, a_perp_kHz, a_iso_kHz, r_A, theta_deg\n"
      "1.3, 43.2, 4.0, 8.6, 120\n"
      "100.4, 64.8, -2.4, 6.3, 24\n"
      "bad, 1, 0, 5, 10\n"
      "15.9, 37.8, 1.7, 9.2, 45\n"
      "1, 2, 3\n");
  std::vector<DftRowError> errors;
  const auto rows = read_dft_table(in, errors);
  CHECK(rows.size() == 3);
  REQUIRE(errors.size() == 2);
  CHECK(errors[0].row == 4);
  CHECK(errors[1].row == 6);
  const DftResidualReport rep = dft_residual_map(rows);
  CHECK(rep.rows[0].theta_dft == Approx(deg(60)));
  std::size_t total = 0;
  for (const auto& b : rep.bins) total += b.count;
  CHECK(total == 3);
  std::ostringstream out;
  write_dft_report(out, rep);
  CHECK(out.str().find("median") != std::string::npos);
}
