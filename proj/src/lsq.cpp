#include <cmath>
#include <limits>

#include "nvloc/lsq.hpp"

namespace nvloc {

Eigen::MatrixXd finite_difference_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& step) {
  Eigen::MatrixXd J;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step[i];
    xp[i] = x[i] + h;
    const Eigen::VectorXd rp = residuals(xp);
    xp[i] = x[i] - h;
    const Eigen::VectorXd rm = residuals(xp);
    xp[i] = x[i];
    if (J.size() == 0) J.resize(rp.size(), x.size());
    J.col(i) = (rp - rm) / (2.0 * h);
  }
  return J;
}

LmResult levenberg_marquardt(const ResidualFn& residuals, const Eigen::VectorXd& x0, const LmOptions& opt,
                             const JacobianFn& jacobian, const Eigen::VectorXd& scale) {
  const Eigen::Index n = x0.size();
  auto jac = [&](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    if (jacobian) return jacobian(x);
    Eigen::VectorXd step(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = scale.size() == n ? scale[i] : 1.0;
      step[i] = opt.fd_relative_step * std::max(std::abs(x[i]), s);
    }
    return finite_difference_jacobian(residuals, x, step);
  };

  LmResult res;
  res.x = x0;
  res.residuals = residuals(x0);
  res.cost = res.residuals.squaredNorm();
  res.jacobian = jac(res.x);
  double lambda = opt.initial_lambda;

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    if (res.cost == 0.0) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd& J = res.jacobian;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * res.residuals;
    Eigen::VectorXd diag = JtJ.diagonal();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (diag[i] <= 0.0) diag[i] = 1.0;
    }
    if ((g.array().abs() / diag.array().sqrt()).maxCoeff() <= opt.gtol * std::sqrt(res.cost)) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    for (int inner = 0; inner < 40; ++inner) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * diag;
      const Eigen::VectorXd delta = A.ldlt().solve(-g);
      const Eigen::VectorXd x_new = res.x + delta;
      const Eigen::VectorXd r_new = residuals(x_new);
      const double c_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
      if (c_new <= res.cost) {
        bool small = true;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s = scale.size() == n ? scale[i] : 0.0;
          if (std::abs(delta[i]) > opt.xtol * (std::abs(res.x[i]) + s)) small = false;
        }
        res.x = x_new;
        res.residuals = r_new;
        const bool stalled = res.cost - c_new <= opt.ftol * res.cost;
        res.cost = c_new;
        res.jacobian = jac(res.x);
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (small || stalled) res.converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    if (!accepted) {
      // No descent direction left at machine precision.
      res.converged = true;
      break;
    }
    if (res.converged) break;
  }
  return res;
}

Eigen::MatrixXd normal_covariance(const Eigen::MatrixXd& jacobian) {
  const Eigen::MatrixXd JtJ = jacobian.transpose() * jacobian;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(JtJ);
  return cod.pseudoInverse();
}

double condition_number(const Eigen::MatrixXd& jacobian) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jacobian);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[s.size() - 1] <= 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / s[s.size() - 1];
}

}  // namespace nvloc
