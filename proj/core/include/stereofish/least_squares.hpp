#pragma once

// Dense Levenberg-Marquardt over residual blocks with forward-evaluated,
// central-difference Jacobians. Each block touches a small subset of the
// global parameter vector; the normal equations are assembled blockwise.

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace stereofish {

struct ResidualBlock {
  std::vector<int> parameters;  // global parameter indices this block reads
  int residual_count = 0;
  // Writes residual_count values; reads only the listed parameters of x.
  std::function<void(const Eigen::VectorXd& x, double* residuals)> evaluate;
};

struct LevenbergMarquardtOptions {
  double initial_lambda = 1e-3;
  double lambda_increase = 10.0;
  double lambda_decrease = 10.0;
  int max_iterations = 200;
  double relative_rms_tolerance = 1e-12;
};

struct LevenbergMarquardtSummary {
  int iterations = 0;
  int accepted_steps = 0;
  int residual_count = 0;
  double initial_cost = 0.0;  // sum of squared residuals
  double final_cost = 0.0;
  bool converged = false;
  std::vector<double> cost_history;  // cost after every accepted step, starting with the initial cost

  double initial_rms() const;
  double final_rms() const;
};

double evaluate_cost(const std::vector<ResidualBlock>& blocks, const Eigen::VectorXd& x);

/// Minimizes the sum of squared residuals in place. The returned cost never
/// exceeds the initial cost; x holds the best iterate even when not converged.
LevenbergMarquardtSummary minimize_levenberg_marquardt(const std::vector<ResidualBlock>& blocks, Eigen::VectorXd& x,
                                                        const LevenbergMarquardtOptions& options = {});

}  // namespace stereofish
