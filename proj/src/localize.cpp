#include <algorithm>
#include <cmath>
#include <numbers>

#include "nvloc/errors.hpp"
#include "nvloc/localize.hpp"
#include "nvloc/lsq.hpp"

namespace nvloc {

using std::numbers::pi;

void MeasurementRecord::validate() const {
  for (const Measured* m : {&f0, &f_m1, &fp0, &fp_m1}) {
    if (m->sigma < 0.0) throw InputError("record '" + label + "': negative frequency sigma");
  }
  if ((B0_sigma.array() < 0.0).any() || (dB_sigma.array() < 0.0).any()) {
    throw InputError("record '" + label + "': negative field sigma");
  }
  if (B0.frame() != dB.frame()) throw InputError("record '" + label + "': B0 and dB in different frames");
}

namespace {

/// Evaluates xi for all records at one (phi, a_iso) with the inversion cached per a_iso.
class CostModel {
 public:
  CostModel(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling, const FitOptions& opt)
      : records_(records), coupling_(coupling), opt_(opt) {}

  void set_a_iso(double a_iso) {
    if (has_a_iso_ && a_iso == a_iso_) return;
    const SphericalPosition p = invert_dipole(coupling_.a_par.value, coupling_.a_perp.value, a_iso, opt_.constants);
    a_iso_ = a_iso;
    has_a_iso_ = true;
    b_ = dipolar_strength(p.r, opt_.constants);
    sin_t_ = std::sin(p.theta);
    cos_t_ = std::cos(p.theta);
  }

  [[nodiscard]] Eigen::Matrix3d tensor(double phi) const {
    const Eigen::Vector3d n(sin_t_ * std::cos(phi), sin_t_ * std::sin(phi), cos_t_);
    Eigen::Matrix3d t = b_ * (3.0 * n * n.transpose() - Eigen::Matrix3d::Identity());
    t.diagonal().array() += a_iso_;
    return t;
  }

  [[nodiscard]] std::size_t residual_count() const {
    return opt_.mode == CostMode::Difference ? records_.size() : 2 * records_.size();
  }

  void residuals(double phi, Eigen::Ref<Eigen::VectorXd> out) const {
    const Eigen::Matrix3d t = tensor(phi);
    const auto& c = opt_.constants;
    for (std::size_t k = 0; k < records_.size(); ++k) {
      const auto& rec = records_[k];
      const double f0 = precession_frequency_raw(rec.B0.components(), rec.dB.components(), t, 0, opt_.variant, c);
      const double f1 = precession_frequency_raw(rec.B0.components(), rec.dB.components(), t, -1, opt_.variant, c);
      if (opt_.mode == CostMode::Difference) {
        out[static_cast<Eigen::Index>(k)] = (rec.fp_m1.value - rec.fp0.value) - (f1 - f0);
      } else {
        out[static_cast<Eigen::Index>(2 * k)] = rec.fp0.value - f0;
        out[static_cast<Eigen::Index>(2 * k + 1)] = rec.fp_m1.value - f1;
      }
    }
  }

  double cost(double phi) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(residual_count()));
    residuals(phi, r);
    return r.squaredNorm();
  }

 private:
  const std::vector<MeasurementRecord>& records_;
  const CouplingEstimate& coupling_;
  const FitOptions& opt_;
  double a_iso_ = 0.0;
  bool has_a_iso_ = false;
  double b_ = 0.0, sin_t_ = 0.0, cos_t_ = 1.0;
};

void check_inputs(const std::vector<MeasurementRecord>& records, const FitOptions& opt) {
  if (records.empty()) throw InputError("fit_azimuth needs at least one record");
  double max_transverse = 0.0;
  for (const auto& r : records) {
    r.validate();
    max_transverse = std::max(max_transverse, std::hypot(r.dB[0], r.dB[1]));
  }
  if (max_transverse < opt.identifiability_threshold) {
    throw IdentifiabilityError("phi is not identifiable: no record has a transverse coil field above " +
                               std::to_string(opt.identifiability_threshold * 1e6) + " uT (flat cost)");
  }
}

bool tie_or_better(const CostMinimum& a, const CostMinimum& b) {
  const double tol = 1e-9 * std::max(a.cost, b.cost) + 1e-18;
  if (std::abs(a.cost - b.cost) <= tol) return a.phi < b.phi;
  return a.cost < b.cost;
}

CostMinimum refine_one(CostModel& model, const CostMinimum& seed, const FitOptions& opt) {
  const bool joint = !opt.fix_a_iso.has_value();
  const auto m = static_cast<Eigen::Index>(model.residual_count());
  ResidualFn fn = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(m);
    model.set_a_iso(joint ? x[1] : *opt.fix_a_iso);
    model.residuals(x[0], r);
    return r;
  };
  Eigen::VectorXd x0(joint ? 2 : 1);
  x0[0] = seed.phi;
  if (joint) x0[1] = seed.a_iso;
  Eigen::VectorXd scale(x0.size());
  scale[0] = 1.0;
  if (joint) scale[1] = 1e3;
  LmOptions lm;
  lm.fd_relative_step = 1e-6;
  lm.xtol = 1e-14;
  lm.ftol = 1e-12;
  LmResult res;
  try {
    res = levenberg_marquardt(fn, x0, lm, nullptr, scale);
  } catch (const DomainError&) {
    return seed;
  }
  CostMinimum out;
  out.phi = wrap_two_pi(res.x[0]);
  out.a_iso = joint ? res.x[1] : *opt.fix_a_iso;
  out.cost = res.cost;
  if (!(out.cost <= seed.cost) || !std::isfinite(out.cost)) return seed;
  return out;
}

AzimuthFit finish(CostModel& model, std::vector<CostMinimum> refined, const FitOptions& opt, std::size_t n_records) {
  // Merge duplicates that converged to the same point.
  std::sort(refined.begin(), refined.end(), tie_or_better);
  std::vector<CostMinimum> unique;
  for (const auto& m : refined) {
    bool dup = false;
    for (const auto& u : unique) {
      if (std::abs(wrap_pi(m.phi - u.phi)) < 1e-6 && std::abs(m.a_iso - u.a_iso) < 1e-3) dup = true;
    }
    if (!dup) unique.push_back(m);
  }
  AzimuthFit fit;
  const CostMinimum& best = unique.front();
  fit.phi = best.phi;
  fit.a_iso = best.a_iso;
  fit.residual = std::sqrt(best.cost);
  fit.a_iso_fixed = opt.fix_a_iso.has_value();
  const double band = opt.degenerate_factor * best.cost +
                      static_cast<double>(n_records) * opt.degenerate_floor * opt.degenerate_floor;
  for (const auto& m : unique) {
    if (m.cost <= band) fit.degenerate_minima.push_back(m.phi);
  }
  fit.minima = unique;
  model.set_a_iso(best.a_iso);
  Eigen::VectorXd r(static_cast<Eigen::Index>(model.residual_count()));
  model.residuals(best.phi, r);
  fit.per_record_xi.assign(r.data(), r.data() + r.size());
  return fit;
}

}  // namespace

double xi(const MeasurementRecord& record, const CouplingEstimate& coupling, double phi, double a_iso,
          EnhancementVariant variant, const PhysicalConstants& c) {
  require_same_frame(record.B0, record.dB);
  const SphericalPosition p = invert_dipole(coupling.a_par.value, coupling.a_perp.value, a_iso, c);
  SphericalPosition full = p;
  full.phi = phi;
  const HyperfineModel hf = dipole_tensor(full, a_iso, c);
  const double f0 = precession_frequency(record.B0, record.dB, hf, 0, variant, c);
  const double f1 = precession_frequency(record.B0, record.dB, hf, -1, variant, c);
  return (record.fp_m1.value - record.fp0.value) - (f1 - f0);
}

AzimuthFit fit_azimuth(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling,
                       const FitOptions& opt) {
  check_inputs(records, opt);
  CostModel model(records, coupling, opt);

  const auto n_phi = static_cast<std::size_t>(std::llround(2.0 * pi / opt.phi_step));
  if (n_phi < 8) throw DomainError("phi_step too coarse");
  std::vector<double> a_grid;
  if (opt.fix_a_iso) {
    a_grid.push_back(*opt.fix_a_iso);
  } else {
    const auto n_a = static_cast<long>(std::llround(opt.a_iso_range / opt.a_iso_step));
    for (long j = -n_a; j <= n_a; ++j) a_grid.push_back(static_cast<double>(j) * opt.a_iso_step);
  }
  const std::size_t n_a = a_grid.size();

  // cost[j * n_phi + i]; rows whose inversion fails stay at +inf
  std::vector<double> cost(n_a * n_phi, std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < n_a; ++j) {
    try {
      model.set_a_iso(a_grid[j]);
    } catch (const DomainError&) {
      continue;
    }
    for (std::size_t i = 0; i < n_phi; ++i) {
      cost[j * n_phi + i] = model.cost(static_cast<double>(i) * 2.0 * pi / static_cast<double>(n_phi));
    }
  }

  std::vector<CostMinimum> grid_minima;
  for (std::size_t j = 0; j < n_a; ++j) {
    for (std::size_t i = 0; i < n_phi; ++i) {
      const double c0 = cost[j * n_phi + i];
      if (!std::isfinite(c0)) continue;
      bool is_min = true;
      for (int dj = -1; dj <= 1 && is_min; ++dj) {
        const long jj = static_cast<long>(j) + dj;
        if (jj < 0 || jj >= static_cast<long>(n_a)) continue;
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0) continue;
          const std::size_t ii = (i + n_phi + static_cast<std::size_t>(di + static_cast<int>(n_phi))) % n_phi;
          const double c1 = cost[static_cast<std::size_t>(jj) * n_phi + ii];
          // strict on one side so plateaus yield a single representative
          if (c1 < c0 || (c1 == c0 && (dj < 0 || (dj == 0 && di < 0)))) {
            is_min = false;
            break;
          }
        }
      }
      if (is_min) {
        grid_minima.push_back({static_cast<double>(i) * 2.0 * pi / static_cast<double>(n_phi), a_grid[j], c0});
      }
    }
  }
  if (grid_minima.empty()) throw ConvergenceError("cost grid has no finite minimum");
  std::sort(grid_minima.begin(), grid_minima.end(), tie_or_better);
  if (grid_minima.size() > opt.max_refinements) grid_minima.resize(opt.max_refinements);

  std::vector<CostMinimum> refined;
  refined.reserve(grid_minima.size());
  for (const auto& g : grid_minima) refined.push_back(refine_one(model, g, opt));
  return finish(model, std::move(refined), opt, records.size());
}

AzimuthFit refine_azimuth(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling,
                          const std::vector<CostMinimum>& seeds, const FitOptions& opt) {
  check_inputs(records, opt);
  if (seeds.empty()) throw InputError("refine_azimuth needs at least one seed");
  CostModel model(records, coupling, opt);
  std::vector<CostMinimum> refined;
  for (const auto& s : seeds) {
    CostMinimum start = s;
    if (opt.fix_a_iso) start.a_iso = *opt.fix_a_iso;
    try {
      model.set_a_iso(start.a_iso);
      start.cost = model.cost(start.phi);
    } catch (const DomainError&) {
      continue;
    }
    refined.push_back(refine_one(model, start, opt));
  }
  if (refined.empty()) throw DomainError("no seed admits a point-dipole inversion");
  return finish(model, std::move(refined), opt, records.size());
}

Eigen::MatrixXd cost_curve(const std::vector<MeasurementRecord>& records, const CouplingEstimate& coupling,
                           double a_iso, std::size_t n_points, const FitOptions& opt) {
  CostModel model(records, coupling, opt);
  model.set_a_iso(a_iso);
  const auto nr = static_cast<Eigen::Index>(model.residual_count());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_points), nr + 2);
  Eigen::VectorXd r(nr);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double phi = 2.0 * pi * static_cast<double>(i) / static_cast<double>(n_points);
    model.residuals(phi, r);
    const auto row = static_cast<Eigen::Index>(i);
    out(row, 0) = phi;
    out.row(row).segment(1, nr) = r.cwiseAbs().transpose();
    out(row, nr + 1) = r.squaredNorm();
  }
  return out;
}

LocatedNucleus assemble_position(const CouplingEstimate& coupling, const AzimuthFit& fit, double z_offset,
                                 const PhysicalConstants& c) {
  LocatedNucleus out;
  out.position = invert_dipole(coupling.a_par.value, coupling.a_perp.value, fit.a_iso, c);
  out.position.phi = wrap_two_pi(fit.phi);
  out.position.phi_determined = true;
  out.cartesian = out.position.cartesian() + Eigen::Vector3d(0.0, 0.0, z_offset);
  return out;
}

std::optional<double> default_fix_a_iso(const CouplingEstimate& coupling, double threshold_radius,
                                        const PhysicalConstants& c) {
  const SphericalPosition p = invert_dipole(coupling.a_par.value, coupling.a_perp.value, 0.0, c);
  if (p.r > threshold_radius) return 0.0;
  return std::nullopt;
}

}  // namespace nvloc
