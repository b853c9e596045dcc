#include <cmath>

#include "nvloc/constants.hpp"
#include "nvloc/errors.hpp"
#include "nvloc/frames.hpp"

namespace nvloc {

namespace {

bool same_value(double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); }

}  // namespace

void PhysicalConstants::validate() const {
  const PhysicalConstants ref{};
  if (!same_value(mu0, ref.mu0) || !same_value(hbar, ref.hbar) || !same_value(gamma_e, ref.gamma_e) ||
      !same_value(D, ref.D)) {
    throw DomainError("mu0, hbar, gamma_e and D are fixed and cannot be overridden");
  }
  if (!(gamma_n >= 10.6e6 && gamma_n <= 10.8e6)) {
    throw DomainError("gamma_n must lie in [10.6, 10.8] MHz/T, got " + std::to_string(gamma_n));
  }
}

PhysicalConstants PhysicalConstants::with_gamma_n(double gamma_n) {
  PhysicalConstants c;
  c.gamma_n = gamma_n;
  c.validate();
  return c;
}

double wrap_two_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a < 0) a += two_pi;
  if (a >= two_pi) a = 0.0;
  return a;
}

double wrap_pi(double angle) {
  double a = wrap_two_pi(angle);
  if (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

Vector3 Vector3::operator+(const Vector3& o) const {
  require_same_frame(*this, o);
  return {v_ + o.v_, frame_};
}

Vector3 Vector3::operator-(const Vector3& o) const {
  require_same_frame(*this, o);
  return {v_ - o.v_, frame_};
}

double Vector3::dot(const Vector3& o) const {
  require_same_frame(*this, o);
  return v_.dot(o.v_);
}

void require_same_frame(const Vector3& a, const Vector3& b) {
  if (a.frame() != b.frame()) {
    throw InputError("mixed-frame vector arithmetic: '" + a.frame() + "' vs '" + b.frame() + "'");
  }
}

Eigen::Matrix3d nv_rotation(double azimuth) {
  // Columns: NV x [11-2], y [-110], z [111] expressed in lab (x [110], y [-110], z [001]).
  const double s13 = 1.0 / std::sqrt(3.0);
  const double s23 = std::sqrt(2.0 / 3.0);
  Eigen::Matrix3d target;
  target << s13, 0.0, s23,
            0.0, 1.0, 0.0,
            -s23, 0.0, s13;
  return Eigen::AngleAxisd(azimuth, Eigen::Vector3d::UnitZ()).toRotationMatrix() * target;
}

FrameRegistry::FrameRegistry() {
  add(Frame{kLabFrame, Eigen::Matrix3d::Identity()});
  add_nv("nv_000", 0.0);
  add_nv("nv_090", deg2rad(90.0));
  add_nv("nv_180", deg2rad(180.0));
  add_nv("nv_270", deg2rad(270.0));
}

FrameRegistry FrameRegistry::lab_only() {
  FrameRegistry r;
  r.frames_.clear();
  r.add(Frame{kLabFrame, Eigen::Matrix3d::Identity()});
  return r;
}

void FrameRegistry::add(Frame frame) {
  const Eigen::Matrix3d& m = frame.rotation_to_lab;
  if ((m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12 ||
      std::abs(m.determinant() - 1.0) > 1e-12) {
    throw DomainError("frame '" + frame.name + "' is not a proper rotation");
  }
  if (frame.name.empty()) throw InputError("frame name must not be empty");
  frames_[frame.name] = std::move(frame);
}

void FrameRegistry::add_nv(const std::string& name, double azimuth) { add(Frame{name, nv_rotation(azimuth)}); }

bool FrameRegistry::contains(const std::string& name) const { return frames_.contains(name); }

const Frame& FrameRegistry::at(const std::string& name) const {
  auto it = frames_.find(name);
  if (it == frames_.end()) throw InputError("unknown frame '" + name + "'");
  return it->second;
}

std::vector<std::string> FrameRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : frames_) out.push_back(k);
  return out;
}

Vector3 FrameRegistry::rotate(const Vector3& v, const std::string& from, const std::string& to) const {
  if (v.frame() != from) throw InputError("vector tagged '" + v.frame() + "' rotated as if in '" + from + "'");
  const Frame& f = at(from);
  const Frame& t = at(to);
  return {t.rotation_to_lab.transpose() * (f.rotation_to_lab * v.components()), to};
}

Vector3 FrameRegistry::to_frame(const Vector3& v, const std::string& to) const { return rotate(v, v.frame(), to); }

nlohmann::json FrameRegistry::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [name, f] : frames_) {
    nlohmann::json m = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) m.push_back({f.rotation_to_lab(i, 0), f.rotation_to_lab(i, 1), f.rotation_to_lab(i, 2)});
    arr.push_back({{"name", name}, {"rotation_to_lab", m}});
  }
  return arr;
}

FrameRegistry FrameRegistry::from_json(const nlohmann::json& j) {
  FrameRegistry reg = lab_only();
  if (!j.is_array()) throw InputError("'frames' must be an array");
  for (const auto& e : j) {
    if (!e.contains("name")) throw InputError("frame entry without 'name'");
    const auto name = e.at("name").get<std::string>();
    if (e.contains("azimuth_deg")) {
      reg.add_nv(name, deg2rad(e.at("azimuth_deg").get<double>()));
    } else if (e.contains("rotation_to_lab")) {
      Eigen::Matrix3d m;
      const auto& rows = e.at("rotation_to_lab");
      if (!rows.is_array() || rows.size() != 3) throw InputError("frame '" + name + "': rotation_to_lab must be 3x3");
      for (int i = 0; i < 3; ++i) {
        if (!rows[i].is_array() || rows[i].size() != 3) throw InputError("frame '" + name + "': rotation_to_lab must be 3x3");
        for (int k = 0; k < 3; ++k) m(i, k) = rows[i][k].get<double>();
      }
      reg.add(Frame{name, m});
    } else {
      throw InputError("frame '" + name + "' needs azimuth_deg or rotation_to_lab");
    }
  }
  return reg;
}

nlohmann::json constants_to_json(const PhysicalConstants& c) {
  return {{"mu0_T_m_per_A", c.mu0},
          {"hbar_J_s", c.hbar},
          {"gamma_e_Hz_per_T", c.gamma_e},
          {"gamma_n_Hz_per_T", c.gamma_n},
          {"D_Hz", c.D}};
}

PhysicalConstants constants_from_json(const nlohmann::json& j) {
  PhysicalConstants c;
  if (!j.is_object()) throw InputError("'constants' must be an object");
  auto read = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = j.at(key).get<double>();
  };
  read("mu0_T_m_per_A", c.mu0);
  read("hbar_J_s", c.hbar);
  read("gamma_e_Hz_per_T", c.gamma_e);
  read("gamma_n_Hz_per_T", c.gamma_n);
  read("D_Hz", c.D);
  c.validate();
  return c;
}

}  // namespace nvloc
