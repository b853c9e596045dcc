#pragma once
// Independent reference computations. Nothing here calls into the library's
// numerical kernels; they are written from the definitions directly.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

// b(r) r^3 in Hz m^3 from the angular gyromagnetic ratios.
inline double dipolar_k(double gamma_n = 10.705e6) {
  const double ge = 2.0 * pi * 28e9, gn = 2.0 * pi * gamma_n;
  return 1e-7 * ge * gn * 1.054e-34 / (2.0 * pi);
}

struct Rt {
  double r, theta;
};

// theta by bisection on the coupling ratio, then r from a_perp (or a_par on axis).
inline Rt invert_bisect(double a_par, double a_perp, double a_iso, double gamma_n = 10.705e6) {
  const double d = a_par - a_iso;
  auto g = [&](double t) { return (3.0 * std::cos(t) * std::cos(t) - 1.0) * a_perp - 3.0 * std::sin(t) * std::cos(t) * d; };
  double lo = 1e-15, hi = pi / 2 - 1e-15;
  // g(lo) ~ 2 a_perp > 0, g(hi) ~ -a_perp < 0
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  const double b = a_perp / (3.0 * std::sin(t) * std::cos(t));
  return {std::cbrt(dipolar_k(gamma_n) / b), t};
}

// Crystal axes expressed in the lab frame (x=[110], y=[-110], z=[001]).
inline Eigen::Vector3d crystal_to_lab(const Eigen::Vector3d& hkl) {
  const Eigen::Vector3d ex = Eigen::Vector3d(1, 1, 0).normalized();
  const Eigen::Vector3d ey = Eigen::Vector3d(-1, 1, 0).normalized();
  const Eigen::Vector3d ez(0, 0, 1);
  const Eigen::Vector3d u = hkl.normalized();
  return {u.dot(ex), u.dot(ey), u.dot(ez)};
}

// Target NV frame built from its crystal axes: z=[111], x=[11-2], y=[-110].
inline Eigen::Matrix3d target_rotation() {
  Eigen::Matrix3d R;
  R.col(0) = crystal_to_lab({1, 1, -2});
  R.col(1) = crystal_to_lab({-1, 1, 0});
  R.col(2) = crystal_to_lab({1, 1, 1});
  return R;
}

inline Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d R;
  R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return R;
}

// Point-dipole secular scalars.
inline double a_par(double r, double t, double a_iso, double gamma_n = 10.705e6) {
  return dipolar_k(gamma_n) / (r * r * r) * (3.0 * std::cos(t) * std::cos(t) - 1.0) + a_iso;
}
inline double a_perp(double r, double t, double gamma_n = 10.705e6) {
  return dipolar_k(gamma_n) / (r * r * r) * 3.0 * std::sin(t) * std::cos(t);
}

// Spin-1 ODMR lines by brute force on the real-symmetric 6x6 embedding of H.
inline Eigen::Vector2d odmr_lines(const Eigen::Vector3d& b_nv, double D = 2.87e9, double ge = 28e9) {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix3cd Sx, Sy, Sz;
  const std::complex<double> I(0, 1);
  Sx << 0, s, 0, s, 0, s, 0, s, 0;
  Sy << 0, -I * s, 0, I * s, 0, -I * s, 0, I * s, 0;
  Sz << 1, 0, 0, 0, 0, 0, 0, 0, -1;
  const Eigen::Matrix3cd H = D * Sz * Sz + ge * (b_nv[0] * Sx + b_nv[1] * Sy + b_nv[2] * Sz);
  Eigen::MatrixXd M(6, 6);
  M << H.real(), -H.imag(), H.imag(), H.real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  // eigenvalues come in pairs
  Eigen::Vector3d e(es.eigenvalues()[0], es.eigenvalues()[2], es.eigenvalues()[4]);
  Eigen::Matrix<double, 6, 3> v;
  v << es.eigenvectors().col(0), es.eigenvectors().col(2), es.eigenvectors().col(4);
  // |0> weight: rows 1 and 4 of the embedding, doubled pair counted once
  int z = 0;
  double best = -1;
  for (int i = 0; i < 3; ++i) {
    const double w = v(1, i) * v(1, i) + v(4, i) * v(4, i);
    if (w > best) best = w, z = i;
  }
  Eigen::Vector2d out;
  int k = 0;
  for (int i = 0; i < 3; ++i) {
    if (i != z) out[k++] = e[i] - e[z];
  }
  if (out[0] > out[1]) std::swap(out[0], out[1]);
  return out;
}

}  // namespace oracle
