#pragma once

#include <functional>

#include <Eigen/Dense>

namespace nvloc {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct LmOptions {
  int max_iterations = 200;
  double xtol = 1e-13;       // relative step size for convergence
  double gtol = 1e-15;       // scaled gradient
  double ftol = 0.0;         // relative cost decrease counted as a stall
  double initial_lambda = 1e-3;
  double fd_relative_step = 1e-6;
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. Without `jacobian`, central
/// differences are used with step fd_relative_step * max(|x_i|, scale_i).
LmResult levenberg_marquardt(const ResidualFn& residuals, const Eigen::VectorXd& x0, const LmOptions& opt = {},
                             const JacobianFn& jacobian = nullptr, const Eigen::VectorXd& scale = {});

Eigen::MatrixXd finite_difference_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& step);

/// (J^T J)^-1 through a complete orthogonal decomposition; rank deficiency leaves
/// the corresponding directions at zero, so callers check conditioning separately.
Eigen::MatrixXd normal_covariance(const Eigen::MatrixXd& jacobian);

/// Ratio of largest to smallest singular value of J (infinity when rank deficient).
double condition_number(const Eigen::MatrixXd& jacobian);

}  // namespace nvloc
