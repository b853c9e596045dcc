#include <cmath>
#include <complex>

#include "nvloc/errors.hpp"
#include "nvloc/spin.hpp"

namespace nvloc {

std::string to_string(EnhancementVariant v) {
  return v == EnhancementVariant::LowField ? "low-field" : "general-field";
}

EnhancementVariant enhancement_variant_from_string(const std::string& s) {
  if (s == "low-field" || s == "low") return EnhancementVariant::LowField;
  if (s == "general-field" || s == "general") return EnhancementVariant::GeneralField;
  throw InputError("unknown enhancement variant '" + s + "'");
}

Eigen::Matrix3d enhancement_matrix(const Eigen::Matrix3d& tensor, int m_s, double B0z, EnhancementVariant variant,
                                   const PhysicalConstants& c) {
  if (m_s < -1 || m_s > 1) throw DomainError("m_S must be -1, 0 or +1");
  const double shape = 3.0 * std::abs(m_s) - 2.0;
  double prefactor;
  if (variant == EnhancementVariant::LowField) {
    prefactor = shape / c.D;
  } else {
    const double ze = c.gamma_e * B0z;
    const double denom = c.D * c.D - ze * ze;
    if (std::abs(denom) <= 1e-9 * c.D * c.D) {
      throw DomainError("enhancement is singular at gamma_e B0z = D (level anticrossing)");
    }
    prefactor = (shape * c.D + m_s * ze) / denom;
  }
  Eigen::Matrix3d m = tensor;
  m.row(2).setZero();
  return prefactor * (c.gamma_e / c.gamma_n) * m;
}

EnhancementTensor enhancement(const HyperfineModel& hf, int m_s, double B0z, EnhancementVariant variant,
                              const PhysicalConstants& c) {
  return {enhancement_matrix(hf.tensor, m_s, B0z, variant, c), variant, m_s};
}

double precession_frequency_raw(const Eigen::Vector3d& B0, const Eigen::Vector3d& dB, const Eigen::Matrix3d& tensor,
                                int m_s, EnhancementVariant variant, const PhysicalConstants& c) {
  if (m_s != 0 && m_s != -1) throw DomainError("precession model supports m_S in {0, -1}");
  Eigen::Vector3d v = -c.gamma_n * B0 + static_cast<double>(m_s) * tensor.col(2);
  if (dB.squaredNorm() > 0.0) {
    const Eigen::Matrix3d alpha = enhancement_matrix(tensor, m_s, B0.z(), variant, c);
    v -= c.gamma_n * (dB + alpha * dB);
  }
  return v.norm();
}

double precession_frequency(const Vector3& B0, const Vector3& dB, const HyperfineModel& hf, int m_s,
                            EnhancementVariant variant, const PhysicalConstants& c) {
  require_same_frame(B0, dB);
  const double f = precession_frequency_raw(B0.components(), dB.components(), hf.tensor, m_s, variant, c);
  if (!(f > 0.0)) throw DomainError("precession frequency vanishes for this field/coupling combination");
  return f;
}

Eigen::Matrix3cd spin1_hamiltonian(const Eigen::Vector3d& B, const PhysicalConstants& c) {
  using cd = std::complex<double>;
  const double s = 1.0 / std::sqrt(2.0);
  const Eigen::Vector3d h = c.gamma_e * B;
  const cd bm(h.x(), -h.y());  // (Bx - i By) / sqrt 2 couples |+1> <- |0>
  Eigen::Matrix3cd H;
  H << c.D + h.z(), s * bm, 0.0,
       s * std::conj(bm), 0.0, s * bm,
       0.0, s * std::conj(bm), c.D - h.z();
  return H;
}

Spin1Spectrum spin1_spectrum(const Eigen::Vector3d& B_nv, const PhysicalConstants& c) {
  const Eigen::Matrix3cd H = spin1_hamiltonian(B_nv, c);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(H);
  Spin1Spectrum out;
  out.energies = es.eigenvalues();
  out.states = es.eigenvectors();
  int z = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::norm(out.states(1, i)) > std::norm(out.states(1, z))) z = i;
  }
  out.zero_like = z;
  int others[2];
  for (int i = 0, k = 0; i < 3; ++i) {
    if (i != z) others[k++] = i;
  }
  out.lines.f_minus = out.energies[others[0]] - out.energies[z];
  out.lines.f_plus = out.energies[others[1]] - out.energies[z];

  // dE/dB_k = gamma_e <v|S_k|v>
  const double s = 1.0 / std::sqrt(2.0);
  auto expect = [&](int i) -> Eigen::Vector3d {
    const Eigen::Vector3cd v = out.states.col(i);
    // <S+> = <Sx> + i <Sy>, S+ = sqrt2 (|+1><0| + |0><-1|)
    const std::complex<double> s_plus = 2.0 * s * (std::conj(v(0)) * v(1) + std::conj(v(1)) * v(2));
    const double sx = s_plus.real();
    const double sy = s_plus.imag();
    const double sz = std::norm(v(0)) - std::norm(v(2));
    return Eigen::Vector3d(sx, sy, sz) * c.gamma_e;
  };
  const Eigen::Vector3d g0 = expect(z);
  out.gradient.row(0) = (expect(others[0]) - g0).transpose();
  out.gradient.row(1) = (expect(others[1]) - g0).transpose();
  return out;
}

OdmrLinePair odmr_lines(const Vector3& B, const Frame& frame, const PhysicalConstants& c) {
  if (B.frame() != kLabFrame) throw InputError("odmr_lines expects a lab-frame field, got '" + B.frame() + "'");
  const Eigen::Vector3d b_nv = frame.rotation_to_lab.transpose() * B.components();
  return spin1_spectrum(b_nv, c).lines;
}

}  // namespace nvloc
