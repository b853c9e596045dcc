// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [--samples N] [--only K]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "nvloc/calibrate.hpp"
#include "nvloc/dipole.hpp"
#include "nvloc/errors.hpp"
#include "nvloc/extract.hpp"
#include "nvloc/localize.hpp"
#include "nvloc/montecarlo.hpp"
#include "nvloc/pipeline.hpp"
#include "nvloc/spin.hpp"
#include "oracles.hpp"

using namespace nvloc;
namespace fs = std::filesystem;

namespace {

constexpr double kA = 1e-10, mT = 1e-3;
const Eigen::Vector3d kB0(0.028 * mT, -0.056 * mT, 9.502 * mT);
const Eigen::Vector3d kDB(-1.715 * mT, 0.614 * mT, -1.547 * mT);

double deg(double d) { return d * oracle::pi / 180.0; }
double rdeg(double r) { return r * 180.0 / oracle::pi; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

// coil field turned about the NV axis, as the three coil positions
Eigen::Vector3d coil(int k, double sign = 1.0) {
  return sign * (Eigen::AngleAxisd(k * 2.0 * oracle::pi / 3.0, Eigen::Vector3d::UnitZ()) * kDB);
}

TruthSet c1_truth(bool six) {
  TruthSet t;
  t.B0 = kB0;
  for (int k = 0; k < 3; ++k) {
    t.coils.push_back({"P" + std::to_string(k) + "+", coil(k)});
    if (six) t.coils.push_back({"P" + std::to_string(k) + "-", coil(k, -1.0)});
  }
  t.nuclei.push_back({"C1", {8.3 * kA, deg(58), deg(238)}, 9e3});
  t.sigma_f = 100.0;
  t.sigma_fR = 100.0;
  t.sigma_fp = 250.0;  // between the measured 0.2 and 0.3 kHz
  t.sigma_field = 15e-6;
  return t;
}

// ---- criteria ----------------------------------------------------------------------

Outcome c1_extraction() {
  const auto e = extract_couplings(101.7e3, 114.2e3, 14.4e3, nominal_tau(101.7e3, 114.2e3));
  const double ap = e.a_par.value / 1e3, at = e.a_perp.value / 1e3;
  const bool pass = std::abs(ap - 3.1) <= 0.3 && std::abs(at - 44.5) <= 0.3;
  return {pass, "a_par " + f(ap) + " kHz (3.1 +- 0.3), a_perp " + f(at) + " kHz (44.5 +- 0.3)"};
}

Outcome c2_inversion() {
  const SphericalPosition p0 = invert_dipole(3.1e3, 44.5e3, 0.0);
  const SphericalPosition p9 = invert_dipole(3.1e3, 44.5e3, 9e3);
  const bool a = std::abs(p0.r / kA - 8.58) <= 0.05 && std::abs(rdeg(p0.theta) - 52.8) <= 0.5;
  const bool b = std::abs(p9.r / kA - 8.3) <= 0.3 && std::abs(rdeg(p9.theta) - 58.0) <= 4.0;
  return {a && b, "a_iso 0: r " + f(p0.r / kA) + " A (8.58 +- 0.05), theta " + f(rdeg(p0.theta), 2) +
                      " deg (52.8 +- 0.5) " + (a ? "ok" : "out") + "; a_iso 9 kHz: r " + f(p9.r / kA) +
                      " A (8.3 +- 0.3), theta " + f(rdeg(p9.theta), 2) + " deg (58 +- 4) " + (b ? "ok" : "out")};
}

Outcome c3_tilted() {
  const HyperfineModel hf = dipole_tensor({8.3 * kA, deg(58), deg(238)}, 9e3);
  const Vector3 b0(kB0, kTargetFrame), db(kDB, kTargetFrame);
  const double f0 = precession_frequency(b0, db, hf, 0);
  const double f1 = precession_frequency(b0, db, hf, -1);
  const double lf = precession_frequency(b0, db, hf, -1, EnhancementVariant::LowField) -
                    precession_frequency(b0, db, hf, 0, EnhancementVariant::LowField);
  const double d = (f1 - f0) / 1e3;
  return {std::abs(d - 14.9) <= 1.5, "f'_-1 - f'_0 = " + f(d) + " kHz (14.9 +- 1.5; f'_0 " + f(f0 / 1e3) + ", f'_-1 " +
                                         f(f1 / 1e3) + ", low-field variant " + f(lf / 1e3) + ")"};
}

Outcome c4_single_config() {
  MeasurementRecord r;
  r.label = "single";
  r.f0 = {101.7e3, 0.1e3};
  r.f_m1 = {114.2e3, 0.1e3};
  r.fp0 = {88.3e3, 0.3e3};
  r.fp_m1 = {103.2e3, 0.2e3};
  r.B0 = Vector3(kB0, kTargetFrame);
  r.dB = Vector3(kDB, kTargetFrame);
  const CouplingEstimate c = extract_couplings(101.7e3, 114.2e3, 14.4e3, nominal_tau(101.7e3, 114.2e3));
  FitOptions opt;
  opt.fix_a_iso = 0.0;
  const AzimuthFit fit = fit_azimuth({r}, c, opt);
  bool near = false;
  std::string list;
  for (double p : fit.degenerate_minima) {
    near = near || std::abs(std::remainder(rdeg(p) - 239.0, 360.0)) <= 10.0;
    list += (list.empty() ? "" : ", ") + f(rdeg(p), 1);
  }
  const bool pass = near && fit.degenerate_minima.size() == 2;
  return {pass, std::to_string(fit.degenerate_minima.size()) + " near-degenerate minima at {" + list +
                    "} deg (one within 10 deg of 239, exactly two)"};
}

Outcome c5_round_trip() {
  std::mt19937_64 g(2024);
  std::uniform_real_distribution<double> ur(6, 15), ut(5, 85), up(0, 360), ua(-20, 20);
  PipelineConfig cfg;
  FitOptions opt;  // joint phi, a_iso
  int ok = 0;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    TruthSet t = c1_truth(false);
    const double theta = ut(g);
    t.nuclei = {{"N", {ur(g) * kA, deg(theta > 5 ? theta : 5.001), deg(up(g))}, ua(g) * 1e3}};
    const TruthNucleus& tn = t.nuclei[0];
    double err = 1.0;
    try {
      const SimulationResult sim = simulate(t, cfg);
      const NucleusData& n = sim.set.nuclei.at(0);
      const CouplingEstimate c = extract_couplings(n.f0.value, n.f_m1.value, n.fR.value, n.tau);
      const AzimuthFit fit = fit_azimuth(n.records, c, opt);
      const LocatedNucleus loc = assemble_position(c, fit);
      err = std::max({std::abs(loc.position.r / tn.position.r - 1.0),
                      std::abs(loc.position.theta / tn.position.theta - 1.0),
                      std::abs(std::remainder(loc.position.phi - tn.position.phi, 2 * oracle::pi)) / (2 * oracle::pi),
                      std::abs(fit.a_iso - tn.a_iso) / std::max(std::abs(tn.a_iso), 1e3)});
    } catch (const Error&) {
    }
    worst = std::max(worst, err);
    ok += err <= 1e-4;
  }
  return {ok == 100, std::to_string(ok) + "/100 within 1e-4 relative (worst " + f(worst * 1e6, 3) + "e-6)"};
}

Outcome c6_coverage(std::size_t samples) {
  PipelineConfig cfg;
  FitOptions opt;  // joint phi, a_iso, as for a nucleus inside 10 A
  McConfig mc;
  mc.n_samples = samples;
  const TruthSet base = c1_truth(true);
  const double truth_phi = base.nuclei[0].position.phi;

  int covered = 0, runs = 0;
  for (int rep = 0; rep < 100; ++rep) {
    TruthSet t = base;
    t.noise = true;
    t.seed = 5000 + rep;
    const NucleusData n = simulate(t, cfg).set.nuclei.at(0);
    mc.seed = 9000 + rep;
    try {
      const EstimateResult r = propagate(n, opt, mc);
      const Interval& iv = r.ci[0][1];
      const double x = r.point[0] + std::remainder(truth_phi - r.point[0], 2 * oracle::pi);
      covered += x >= iv.low && x <= iv.high;
      ++runs;
    } catch (const Error& e) {
      std::cerr << "  repetition " << rep << " failed: " << e.what() << "\n";
    }
  }

  // width scaling on the noiseless data
  TruthSet t = base;
  std::array<double, 3> w68{}, w95{};
  const std::array<double, 3> scales{0.5, 1.0, 2.0};
  mc.seed = 77;
  for (std::size_t i = 0; i < 3; ++i) {
    TruthSet s = t;
    s.sigma_f *= scales[i];
    s.sigma_fR *= scales[i];
    s.sigma_fp *= scales[i];
    s.sigma_field *= scales[i];
    const EstimateResult r = propagate(simulate(s, cfg).set.nuclei.at(0), opt, mc);
    w68[i] = r.ci[0][0].high - r.ci[0][0].low;
    w95[i] = r.ci[0][1].high - r.ci[0][1].low;
  }
  auto within = [](double ratio, double want) { return std::abs(ratio / want - 1.0) <= 0.2; };
  const bool lin = within(w68[0] / w68[1], 0.5) && within(w68[2] / w68[1], 2.0) && within(w95[0] / w95[1], 0.5) &&
                   within(w95[2] / w95[1], 2.0);
  const bool pass = covered >= 90 && lin;
  return {pass, "95% phi CI covers truth in " + std::to_string(covered) + "/" + std::to_string(runs) +
                    " (>= 90); width ratios 0.5x/2x: 68% " + f(w68[0] / w68[1], 3) + "/" + f(w68[2] / w68[1], 3) +
                    ", 95% " + f(w95[0] / w95[1], 3) + "/" + f(w95[2] / w95[1], 3) + " (within 20% of 0.5/2); " +
                    std::to_string(samples) + " samples per fit, 1x 68% width " + f(rdeg(w68[1]), 2) + " deg"};
}

Outcome c7_odmr() {
  const FrameRegistry reg;
  const PhysicalConstants c;
  const Frame& nv = reg.at(kTargetFrame);
  const OdmrLinePair a = odmr_lines(Vector3(nv.z_axis_in_lab() * 9.502 * mT, kLabFrame), nv);
  const double em = std::abs(a.f_minus - (c.D - c.gamma_e * 9.502 * mT));
  const double ep = std::abs(a.f_plus - (c.D + c.gamma_e * 9.502 * mT));
  const bool aligned = em <= 1.0 && ep <= 1.0 && std::abs(a.f_minus - 2.60394e9) <= 5e3 &&
                       std::abs(a.f_plus - 3.13606e9) <= 5e3;

  // second order in x = gamma_e B_perp: without axial field the bright state couples with x,
  // with an axial field z each |+-1> couples with x / sqrt 2
  double worst_pt = 0.0;
  for (double ratio : {0.001, 0.005, 0.01, 0.019}) {
    const double x = ratio * c.D;
    for (double az : {0.0, 1.1, 2.5}) {
      const Eigen::Vector3d bt(x / c.gamma_e * std::cos(az), x / c.gamma_e * std::sin(az), 0.0);
      const auto l = spin1_spectrum(bt).lines;
      worst_pt = std::max({worst_pt, std::abs((l.f_minus - c.D) / (x * x / c.D) - 1.0),
                           std::abs((l.f_plus - c.D) / (2 * x * x / c.D) - 1.0)});
      const double z = c.gamma_e * 9.502 * mT;
      const Eigen::Vector3d bz = bt + Eigen::Vector3d(0, 0, 9.502 * mT);
      const auto m = spin1_spectrum(bz).lines;
      const double s0 = -0.5 * x * x * (1.0 / (c.D + z) + 1.0 / (c.D - z));
      const double sp = 0.5 * x * x / (c.D + z), sm = 0.5 * x * x / (c.D - z);
      worst_pt = std::max({worst_pt, std::abs((m.f_minus - (c.D - z)) / (sm - s0) - 1.0),
                           std::abs((m.f_plus - (c.D + z)) / (sp - s0) - 1.0)});
    }
  }

  const Vector3 B = reg.to_frame(Vector3(kDB, kTargetFrame), kLabFrame);
  double worst_rt = 0.0;
  for (const auto& trio : std::vector<std::vector<std::string>>{
           {"nv_000", "nv_090", "nv_180"}, {"nv_090", "nv_180", "nv_270"}, {"nv_000", "nv_180", "nv_270"}}) {
    const FieldSolution s = solve_field(synth_odmr(B, trio, reg, 0.05e6, 0.0, 1), reg, B);
    worst_rt = std::max(worst_rt, (s.B.components() - B.components()).norm() / B.norm());
  }
  const bool pass = aligned && worst_pt <= 0.01 && worst_rt <= 1e-9;
  return {pass, "aligned lines " + f(a.f_minus / 1e9, 6) + "/" + f(a.f_plus / 1e9, 6) + " GHz, off analytic by " +
                    f(em, 6) + "/" + f(ep, 6) + " Hz; worst PT deviation " + f(worst_pt * 100, 3) +
                    "% (<= 1%); calibration round trip " + f(worst_rt * 1e12, 3) + "e-12 relative (<= 1e-9)"};
}

Outcome c8_variants() {
  struct Site {
    const char* name;
    double r, theta, phi, a_iso;
  };
  const Site sites[] = {{"C1", 8.3, 58, 238, 9}, {"C2", 6.8, 19, 20, 19}, {"C3", 8.9, 43, 208, 1}, {"C4", 11.47, 51.8, 34, 0}};
  double worst = 0.0;
  std::string where;
  for (const auto& s : sites) {
    const HyperfineModel hf = dipole_tensor({s.r * kA, deg(s.theta), deg(s.phi)}, s.a_iso * 1e3);
    for (int k = 0; k < 3; ++k) {
      for (double sign : {1.0, -1.0}) {
        for (int m : {0, -1}) {
          const double g = precession_frequency_raw(kB0, coil(k, sign), hf.tensor, m, EnhancementVariant::GeneralField, {});
          const double l = precession_frequency_raw(kB0, coil(k, sign), hf.tensor, m, EnhancementVariant::LowField, {});
          if (std::abs(g - l) > worst) {
            worst = std::abs(g - l);
            where = std::string(s.name) + ", m_S=" + std::to_string(m);
          }
        }
      }
    }
  }
  return {worst < 100.0, "largest low-field vs general-field difference " + f(worst, 1) + " Hz (" + where + ") < 100 Hz"};
}

Outcome c9_determinism() {
  const fs::path dir = fs::temp_directory_path() / "nvloc_acceptance_determinism";
  fs::remove_all(dir);
  PipelineConfig cfg;
  cfg.output_dir = (dir / "sim").string();
  TruthSet t = c1_truth(true);
  t.noise = true;
  t.seed = 11;
  {
    std::ofstream out(dir.string() + "_truth.txt");
    write_truth(out, t);
  }
  cmd_simulate(dir.string() + "_truth.txt", cfg);
  const std::string meas = (dir / "sim" / "measurements.txt").string();

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  std::string ref;
  int identical = 0, runs = 0;
  for (std::size_t threads : {1u, 2u, 8u}) {
    for (int rep = 0; rep < 2; ++rep) {
      PipelineConfig c = cfg;
      c.threads = threads;
      c.mc.seed = 4242;
      c.mc.n_samples = 40000;
      c.output_dir = (dir / ("t" + std::to_string(threads) + "_" + std::to_string(rep))).string();
      cmd_localize(meas, c);
      std::string all;
      for (const char* name : {"report.json", "report.txt", "C1_scatter.csv", "C1_cost.csv"}) {
        all += slurp(fs::path(c.output_dir) / name);
      }
      if (ref.empty()) ref = all;
      identical += all == ref;
      ++runs;
    }
  }
  fs::remove_all(dir);
  fs::remove(dir.string() + "_truth.txt");
  return {identical == runs && !ref.empty(),
          std::to_string(identical) + "/" + std::to_string(runs) +
              " localize runs (threads 1/2/8, twice each, 40000 samples) byte-identical in report and data files"};
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t samples = 40000;
  int only = 0;
  if (const char* env = std::getenv("NVLOC_ACCEPTANCE_SAMPLES"); env && *env) samples = std::strtoull(env, nullptr, 10);
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string a = argv[i];
    if (a == "--samples") samples = std::strtoull(argv[i + 1], nullptr, 10);
    if (a == "--only") only = std::atoi(argv[i + 1]);
  }

  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "coupling extraction golden test", 1.0, c1_extraction},
      {2, "dipole inversion golden test", 1.0, c2_inversion},
      {3, "tilted-field forward model", 1.0, c3_tilted},
      {4, "single-configuration azimuth fit", 10.0, c4_single_config},
      {5, "synthetic end-to-end round trip", 120.0, c5_round_trip},
      {6, "Monte Carlo coverage", 600.0, [&] { return c6_coverage(samples); }},
      {7, "ODMR eigensolver", 5.0, c7_odmr},
      {8, "enhancement-variant consistency", 1.0, c8_variants},
      {9, "determinism", 0.0, c9_determinism},
  };

  int failed = 0;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = f(secs, 2) + " s";
    if (c.limit_s > 0) {
      timing += " (limit " + f(c.limit_s, 0) + " s)";
      if (secs > c.limit_s) {
        o.pass = false;
        o.detail += "; runtime over limit";
      }
    }
    failed += !o.pass;
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail
              << "  [" << timing << "]" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
