#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "nvloc/dipole.hpp"
#include "nvloc/errors.hpp"
#include "text_util.hpp"

namespace nvloc {

Eigen::Vector3d SphericalPosition::cartesian() const {
  const double p = phi_determined ? phi : 0.0;
  return {r * std::sin(theta) * std::cos(p), r * std::sin(theta) * std::sin(p), r * std::cos(theta)};
}

HyperfineModel HyperfineModel::from_tensor(const Eigen::Matrix3d& tensor, double a_iso) {
  HyperfineModel hf;
  hf.tensor = tensor;
  hf.secular_vector = tensor.col(2);
  hf.a_par = tensor(2, 2);
  hf.a_perp = std::hypot(tensor(0, 2), tensor(1, 2));
  hf.a_iso = a_iso;
  return hf;
}

double dipolar_strength(double r, const PhysicalConstants& c) { return c.dipolar_constant() / (r * r * r); }

HyperfineModel dipole_tensor(const SphericalPosition& pos, double a_iso, const PhysicalConstants& c,
                             const DipoleOptions& opt) {
  if (!(pos.r >= opt.min_radius)) {
    throw DomainError("point-dipole model needs r >= " + std::to_string(opt.min_radius / kAngstrom) + " A");
  }
  const double b = dipolar_strength(pos.r, c);
  const Eigen::Vector3d n(std::sin(pos.theta) * std::cos(pos.phi), std::sin(pos.theta) * std::sin(pos.phi),
                          std::cos(pos.theta));
  const Eigen::Matrix3d t = b * (3.0 * n * n.transpose() - Eigen::Matrix3d::Identity()) +
                            a_iso * Eigen::Matrix3d::Identity();
  return HyperfineModel::from_tensor(t, a_iso);
}

SphericalPosition invert_dipole(double a_par, double a_perp, double a_iso, const PhysicalConstants& c) {
  if (!(a_perp >= 0.0)) throw DomainError("a_perp must be non-negative");
  const double d = a_par - a_iso;
  if (d == 0.0 && a_perp == 0.0) throw DomainError("non-invertible couplings: a_par - a_iso = a_perp = 0");
  if (!std::isfinite(d) || !std::isfinite(a_perp)) throw DomainError("non-finite couplings");

  // (3cos^2 - 1) / (3 sin cos) = (2 cot - tan) / 3 is strictly decreasing on (0, pi/2),
  // so tan(theta) is the positive root of t^2 + k t - 2 = 0 with k = 3 d / a_perp.
  double theta;
  if (a_perp == 0.0) {
    theta = d > 0.0 ? 0.0 : std::numbers::pi / 2.0;
  } else {
    const double k = 3.0 * d / a_perp;
    const double s = std::sqrt(k * k + 8.0);
    const double t = k > 0.0 ? 4.0 / (k + s) : (s - k) / 2.0;
    theta = std::atan(t);
  }
  const double cos2 = std::cos(theta) * std::cos(theta);
  const double b = std::sqrt((d * d + a_perp * a_perp) / (1.0 + 3.0 * cos2));
  SphericalPosition pos;
  pos.r = std::cbrt(c.dipolar_constant() / b);
  pos.theta = theta;
  pos.phi = 0.0;
  pos.phi_determined = false;
  return pos;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

DftResidualReport dft_residual_map(const std::vector<DftRow>& table, const PhysicalConstants& c,
                                   double bin_width) {
  DftResidualReport report;
  std::map<long, std::pair<std::vector<double>, std::vector<double>>> binned;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const DftRow& row = table[i];
    try {
      if (!(row.r_dft > 0.0)) throw DomainError("r_dft must be positive");
      const SphericalPosition p = invert_dipole(row.a_par, row.a_perp, row.a_iso.value_or(0.0), c);
      DftResidual res;
      res.r_dft = row.r_dft;
      double th = std::fmod(std::abs(row.theta_dft), std::numbers::pi);
      res.theta_dft = std::min(th, std::numbers::pi - th);
      res.r_inverted = p.r;
      res.theta_inverted = p.theta;
      res.dr = p.r - row.r_dft;
      res.dtheta = p.theta - res.theta_dft;
      report.rows.push_back(res);
      auto& slot = binned[static_cast<long>(std::floor(row.r_dft / bin_width))];
      slot.first.push_back(res.dr);
      slot.second.push_back(res.dtheta);
    } catch (const Error& e) {
      report.errors.push_back({i + 1, e.what()});
    }
  }
  for (auto& [idx, vals] : binned) {
    DftBin bin;
    bin.r_low = static_cast<double>(idx) * bin_width;
    bin.r_high = bin.r_low + bin_width;
    bin.count = vals.first.size();
    bin.median_dr = median(vals.first);
    bin.median_dtheta = median(vals.second);
    report.bins.push_back(bin);
  }
  return report;
}

std::vector<DftRow> read_dft_table(std::istream& in, std::vector<DftRowError>& errors) {
  std::vector<DftRow> rows;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto fields = detail::split_fields(trimmed);
    if (header.empty()) {
      header = fields;
      for (const char* need : {"a_par_kHz", "a_perp_kHz", "r_A", "theta_deg"}) {
        if (std::find(header.begin(), header.end(), need) == header.end()) {
          throw InputError("line " + std::to_string(lineno) + ": DFT table header lacks column '" + need + "'");
        }
      }
      continue;
    }
    if (fields.size() != header.size()) {
      errors.push_back({lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(fields.size())});
      continue;
    }
    try {
      DftRow row;
      for (std::size_t k = 0; k < header.size(); ++k) {
        const double v = detail::parse_double(fields[k]);
        if (header[k] == "a_par_kHz") row.a_par = v * kKiloHertz;
        else if (header[k] == "a_perp_kHz") row.a_perp = v * kKiloHertz;
        else if (header[k] == "a_iso_kHz") row.a_iso = v * kKiloHertz;
        else if (header[k] == "r_A") row.r_dft = v * kAngstrom;
        else if (header[k] == "theta_deg") row.theta_dft = deg2rad(v);
      }
      if (row.a_perp < 0.0) throw DomainError("a_perp must be non-negative");
      rows.push_back(row);
    } catch (const Error& e) {
      errors.push_back({lineno, e.what()});
    }
  }
  return rows;
}

void write_dft_report(std::ostream& out, const DftResidualReport& report) {
  out << "r_dft_A,theta_dft_deg,r_A,theta_deg,dr_A,dtheta_deg\n";
  out.precision(10);
  for (const auto& r : report.rows) {
    out << r.r_dft / kAngstrom << ',' << rad2deg(r.theta_dft) << ',' << r.r_inverted / kAngstrom << ','
        << rad2deg(r.theta_inverted) << ',' << r.dr / kAngstrom << ',' << rad2deg(r.dtheta) << '\n';
  }
  out << "\n# binned medians\nr_low_A,r_high_A,count,median_dr_A,median_dtheta_deg\n";
  for (const auto& b : report.bins) {
    out << b.r_low / kAngstrom << ',' << b.r_high / kAngstrom << ',' << b.count << ',' << b.median_dr / kAngstrom
        << ',' << rad2deg(b.median_dtheta) << '\n';
  }
  if (!report.errors.empty()) {
    out << "\n# row errors\n";
    for (const auto& e : report.errors) out << "# row " << e.row << ": " << e.message << '\n';
  }
}

}  // namespace nvloc
