#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "nvloc/calibrate.hpp"
#include "nvloc/errors.hpp"
#include "nvloc/lsq.hpp"
#include "nvloc/random.hpp"
#include "text_util.hpp"

namespace nvloc {

std::string to_string(FieldContext c) { return c == FieldContext::CoilField ? "coil-field" : "bias-field"; }

void OdmrDataset::validate(const FrameRegistry& frames) const {
  if (entries.empty()) throw InputError("ODMR dataset is empty");
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.nv_id).second) throw InputError("duplicate NV id '" + e.nv_id + "'");
    if (!frames.contains(e.frame)) throw InputError("NV '" + e.nv_id + "': unknown frame '" + e.frame + "'");
    if (!(e.sigma_minus > 0.0) || !(e.sigma_plus > 0.0)) throw InputError("NV '" + e.nv_id + "': sigma must be > 0");
    if (!(e.lines.f_minus > 0.0) || !(e.lines.f_plus >= e.lines.f_minus)) {
      throw InputError("NV '" + e.nv_id + "': lines must be positive and ascending");
    }
  }
  if (sign_reference && !(sign_reference->norm() > 0.0)) throw InputError("sign_reference must be non-zero");
}

namespace {

struct Problem {
  std::vector<Eigen::Matrix3d> rot;  // NV frame -> lab, per entry
  Eigen::VectorXd meas, sigma;
  PhysicalConstants c;

  [[nodiscard]] Eigen::VectorXd residuals(const Eigen::VectorXd& B) const {
    Eigen::VectorXd r(meas.size());
    for (std::size_t k = 0; k < rot.size(); ++k) {
      const Spin1Spectrum s = spin1_spectrum(rot[k].transpose() * B, c);
      const auto i = static_cast<Eigen::Index>(2 * k);
      r[i] = (meas[i] - s.lines.f_minus) / sigma[i];
      r[i + 1] = (meas[i + 1] - s.lines.f_plus) / sigma[i + 1];
    }
    return r;
  }

  [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& B) const {
    Eigen::MatrixXd J(meas.size(), 3);
    for (std::size_t k = 0; k < rot.size(); ++k) {
      const Spin1Spectrum s = spin1_spectrum(rot[k].transpose() * B, c);
      const Eigen::Matrix<double, 2, 3> g = s.gradient * rot[k].transpose();
      const auto i = static_cast<Eigen::Index>(2 * k);
      J.row(i) = -g.row(0) / sigma[i];
      J.row(i + 1) = -g.row(1) / sigma[i + 1];
    }
    return J;
  }
};

std::size_t distinct_axes(const std::vector<Eigen::Matrix3d>& rot) {
  std::vector<Eigen::Vector3d> axes;
  for (const auto& R : rot) {
    const Eigen::Vector3d z = R.col(2);
    bool seen = false;
    for (const auto& a : axes) {
      if (a.cross(z).norm() < 1e-6) seen = true;
    }
    if (!seen) axes.push_back(z);
  }
  return axes.size();
}

}  // namespace

FieldSolution solve_field(const OdmrDataset& dataset, const FrameRegistry& frames,
                          const std::optional<Vector3>& initial_guess, const CalibrateOptions& opt) {
  dataset.validate(frames);
  Problem pb;
  pb.c = opt.constants;
  const auto m = static_cast<Eigen::Index>(2 * dataset.entries.size());
  pb.meas.resize(m);
  pb.sigma.resize(m);
  for (std::size_t k = 0; k < dataset.entries.size(); ++k) {
    const auto& e = dataset.entries[k];
    pb.rot.push_back(frames.at(e.frame).rotation_to_lab);
    const auto i = static_cast<Eigen::Index>(2 * k);
    pb.meas[i] = e.lines.f_minus;
    pb.meas[i + 1] = e.lines.f_plus;
    pb.sigma[i] = e.sigma_minus;
    pb.sigma[i + 1] = e.sigma_plus;
  }
  const std::size_t axes = distinct_axes(pb.rot);
  if (axes < 2) {
    throw IdentifiabilityError("all NV frames share one axis; the field component transverse to it is not "
                               "identifiable (condition number infinite)");
  }

  // aligned-field linearization: f+ - f- = 2 gamma_e |B.z|
  const auto nk = dataset.entries.size();
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(nk), 3);
  Eigen::VectorXd proj(static_cast<Eigen::Index>(nk));
  for (std::size_t k = 0; k < nk; ++k) {
    Z.row(static_cast<Eigen::Index>(k)) = pb.rot[k].col(2).transpose();
    proj[static_cast<Eigen::Index>(k)] =
        (dataset.entries[k].lines.f_plus - dataset.entries[k].lines.f_minus) / (2.0 * opt.constants.gamma_e);
  }
  std::vector<Eigen::Vector3d> starts;
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Z);
  Eigen::Vector3d null_dir = Eigen::Vector3d::Zero();
  if (cod.rank() < 3) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeFullV);
    null_dir = svd.matrixV().col(2);
  }
  const std::size_t patterns = std::size_t{1} << std::min<std::size_t>(nk, 12);
  const double scale = std::max(proj.cwiseAbs().maxCoeff(), 1e-9);
  for (std::size_t s = 0; s < patterns; ++s) {
    Eigen::VectorXd rhs = proj;
    for (std::size_t k = 0; k < std::min<std::size_t>(nk, 12); ++k) {
      if ((s >> k) & 1u) rhs[static_cast<Eigen::Index>(k)] = -rhs[static_cast<Eigen::Index>(k)];
    }
    const Eigen::Vector3d b = cod.solve(rhs);
    if (null_dir.squaredNorm() > 0.0) {
      for (double t : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) starts.emplace_back(b + t * scale * null_dir);
    } else {
      starts.push_back(b);
    }
  }
  if (initial_guess) {
    if (initial_guess->frame() != kLabFrame) throw InputError("initial guess must be a lab-frame vector");
    starts.push_back(initial_guess->components());
  }

  LmOptions lm;
  lm.max_iterations = opt.max_iterations;
  lm.xtol = 1e-15;
  const Eigen::Vector3d bscale = Eigen::Vector3d::Constant(1e-9);
  LmResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    LmResult r = levenberg_marquardt([&](const Eigen::VectorXd& x) { return pb.residuals(x); }, s, lm,
                                     [&](const Eigen::VectorXd& x) { return pb.jacobian(x); }, bscale);
    if (r.cost < best.cost) best = std::move(r);
  }
  if (!best.converged || !std::isfinite(best.cost)) {
    throw ConvergenceError("field solve did not converge in " + std::to_string(opt.max_iterations) + " iterations");
  }

  Eigen::Vector3d B = best.x;
  Eigen::Vector3d ref = Eigen::Vector3d::UnitZ();
  if (initial_guess) {
    ref = initial_guess->components();
  } else if (dataset.sign_reference) {
    ref = *dataset.sign_reference;
  }
  if (B.dot(ref) < 0.0) B = -B;

  FieldSolution sol;
  sol.B = Vector3(B, kLabFrame);
  const Eigen::VectorXd r = pb.residuals(B);
  const Eigen::MatrixXd J = pb.jacobian(B);
  sol.condition = condition_number(J);
  if (!(sol.condition < opt.max_condition)) {
    throw IdentifiabilityError("field geometry ill-conditioned: condition number " + std::to_string(sol.condition));
  }
  const Eigen::Matrix3d cov = normal_covariance(J);
  sol.covariance = cov;
  sol.sigma = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  sol.chi2 = r.squaredNorm();
  sol.dof = static_cast<std::size_t>(std::max<Eigen::Index>(m - 3, 0));
  double ss = 0.0, ss_mirror = 0.0;
  const Eigen::VectorXd rm = pb.residuals(-B);
  for (Eigen::Index i = 0; i < m; ++i) {
    sol.residuals.push_back(r[i] * pb.sigma[i]);
    ss += std::pow(r[i] * pb.sigma[i], 2);
    ss_mirror += std::pow(rm[i] * pb.sigma[i], 2);
  }
  sol.residual_rms = std::sqrt(ss / static_cast<double>(m));
  sol.mirrored_residual_rms = std::sqrt(ss_mirror / static_cast<double>(m));
  sol.iterations = best.iterations;
  if (axes == 2) {
    sol.warnings.push_back("only two NV orientations: 4 lines for 3 unknowns, field sigma inflated");
  }
  return sol;
}

AlignmentReport alignment_report(const Vector3& B_lab, const Frame& target, double threshold) {
  if (B_lab.frame() != kLabFrame) throw InputError("alignment_report expects a lab-frame field");
  const Eigen::Vector3d b = target.rotation_to_lab.transpose() * B_lab.components();
  AlignmentReport a;
  a.transverse = std::hypot(b[0], b[1]);
  a.tilt = std::atan2(a.transverse, b[2]);
  a.pass = a.transverse < threshold;
  return a;
}

AlignmentReport alignment_report(const FieldSolution& solution, const Frame& target, double threshold) {
  return alignment_report(solution.B, target, threshold);
}

OdmrDataset synth_odmr(const Vector3& B_lab, const std::vector<std::string>& frame_names, const FrameRegistry& frames,
                       double line_sigma, double noise_sigma, std::uint64_t seed, const PhysicalConstants& c) {
  OdmrDataset ds;
  const CounterNormal rng(seed);
  for (std::size_t k = 0; k < frame_names.size(); ++k) {
    OdmrEntry e;
    e.nv_id = "NV" + std::to_string(k + 1);
    e.frame = frame_names[k];
    e.lines = odmr_lines(B_lab, frames.at(e.frame), c);
    if (noise_sigma > 0.0) {
      e.lines.f_minus += noise_sigma * rng(2 * k, 0);
      e.lines.f_plus += noise_sigma * rng(2 * k + 1, 0);
      if (e.lines.f_plus < e.lines.f_minus) std::swap(e.lines.f_minus, e.lines.f_plus);
    }
    e.sigma_minus = e.sigma_plus = line_sigma;
    ds.entries.push_back(e);
  }
  return ds;
}

OdmrDataset read_odmr(std::istream& in, const FrameRegistry& frames) {
  struct Pending {
    std::string frame;
    std::vector<std::pair<double, double>> lines;  // (f, sigma)
    std::size_t first_line = 0;
  };
  std::map<std::string, Pending> by_id;
  std::vector<std::string> order;
  OdmrDataset ds;
  std::string raw;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) { throw InputError("line " + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, raw)) {
    ++lineno;
    std::string s(detail::trim(raw.substr(0, raw.find('#'))));
    if (s.empty()) continue;
    const auto f = detail::split_fields(s);
    if (f[0] == "context") {
      if (f.size() != 2) fail("context takes one value");
      if (f[1] == "coil-field") {
        ds.context = FieldContext::CoilField;
      } else if (f[1] == "bias-field") {
        ds.context = FieldContext::BiasField;
      } else {
        fail("unknown context '" + f[1] + "'");
      }
      continue;
    }
    if (f[0] == "sign_reference") {
      if (f.size() != 4) fail("sign_reference takes three components");
      try {
        ds.sign_reference = Eigen::Vector3d(detail::parse_double(f[1]), detail::parse_double(f[2]),
                                            detail::parse_double(f[3]));
      } catch (const InputError& e) {
        fail(e.what());
      }
      continue;
    }
    if (f.size() != 4) fail("expected 'nv_id frame f_GHz sigma_MHz', got " + std::to_string(f.size()) + " fields");
    if (!frames.contains(f[1])) fail("unknown frame '" + f[1] + "'");
    double fg = 0.0, sm = 0.0;
    try {
      fg = detail::parse_double(f[2]);
      sm = detail::parse_double(f[3]);
    } catch (const InputError& e) {
      fail(e.what());
    }
    if (!(fg > 0.0) || !(sm > 0.0)) fail("frequency and sigma must be positive");
    auto it = by_id.find(f[0]);
    if (it == by_id.end()) {
      order.push_back(f[0]);
      it = by_id.emplace(f[0], Pending{f[1], {}, lineno}).first;
    } else if (it->second.frame != f[1]) {
      fail("NV '" + f[0] + "' listed with two frames");
    }
    it->second.lines.emplace_back(fg * 1e9, sm * 1e6);
  }
  if (order.empty()) throw InputError("ODMR file has no resonances");
  for (const auto& id : order) {
    auto& p = by_id[id];
    if (p.lines.size() != 2) {
      throw InputError("line " + std::to_string(p.first_line) + ": NV '" + id + "' needs exactly two lines, has " +
                       std::to_string(p.lines.size()));
    }
    std::sort(p.lines.begin(), p.lines.end());
    OdmrEntry e;
    e.nv_id = id;
    e.frame = p.frame;
    e.lines = {p.lines[0].first, p.lines[1].first};
    e.sigma_minus = p.lines[0].second;
    e.sigma_plus = p.lines[1].second;
    ds.entries.push_back(e);
  }
  ds.validate(frames);
  return ds;
}

void write_odmr(std::ostream& out, const OdmrDataset& ds) {
  out << "# nv_id frame f_GHz sigma_MHz\n";
  out << "context " << to_string(ds.context) << '\n';
  out.precision(15);
  if (ds.sign_reference) {
    out << "sign_reference " << (*ds.sign_reference)[0] << ' ' << (*ds.sign_reference)[1] << ' '
        << (*ds.sign_reference)[2] << '\n';
  }
  for (const auto& e : ds.entries) {
    out << e.nv_id << ' ' << e.frame << ' ' << e.lines.f_minus * 1e-9 << ' ' << e.sigma_minus * 1e-6 << '\n';
    out << e.nv_id << ' ' << e.frame << ' ' << e.lines.f_plus * 1e-9 << ' ' << e.sigma_plus * 1e-6 << '\n';
  }
}

}  // namespace nvloc
