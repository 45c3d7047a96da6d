#include "stereofish/least_squares.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

namespace stereofish {

namespace {

int total_residuals(const std::vector<ResidualBlock>& blocks) {
  int n = 0;
  for (const auto& b : blocks) n += b.residual_count;
  return n;
}

void accumulate_normal_equations(const std::vector<ResidualBlock>& blocks, const Eigen::VectorXd& x,
                                 Eigen::MatrixXd& hessian, Eigen::VectorXd& gradient) {
  hessian.setZero(x.size(), x.size());
  gradient.setZero(x.size());

  Eigen::VectorXd probe = x;
  for (const auto& block : blocks) {
    const int m = block.residual_count;
    const int k = static_cast<int>(block.parameters.size());
    Eigen::VectorXd r(m), plus(m), minus(m);
    block.evaluate(x, r.data());

    Eigen::MatrixXd jac(m, k);
    for (int j = 0; j < k; ++j) {
      const int idx = block.parameters[j];
      const double h = 1e-6 * std::max(1.0, std::abs(x(idx)));
      probe(idx) = x(idx) + h;
      block.evaluate(probe, plus.data());
      probe(idx) = x(idx) - h;
      block.evaluate(probe, minus.data());
      probe(idx) = x(idx);
      jac.col(j) = (plus - minus) / (2.0 * h);
    }

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    for (int a = 0; a < k; ++a) {
      gradient(block.parameters[a]) += jtr(a);
      for (int b = 0; b < k; ++b) {
        hessian(block.parameters[a], block.parameters[b]) += jtj(a, b);
      }
    }
  }
}

}  // namespace

double LevenbergMarquardtSummary::initial_rms() const {
  return residual_count > 0 ? std::sqrt(initial_cost / residual_count) : 0.0;
}

double LevenbergMarquardtSummary::final_rms() const {
  return residual_count > 0 ? std::sqrt(final_cost / residual_count) : 0.0;
}

double evaluate_cost(const std::vector<ResidualBlock>& blocks, const Eigen::VectorXd& x) {
  double cost = 0.0;
  std::vector<double> r;
  for (const auto& block : blocks) {
    r.resize(block.residual_count);
    block.evaluate(x, r.data());
    for (double v : r) cost += v * v;
  }
  return cost;
}

LevenbergMarquardtSummary minimize_levenberg_marquardt(const std::vector<ResidualBlock>& blocks, Eigen::VectorXd& x,
                                                        const LevenbergMarquardtOptions& options) {
  LevenbergMarquardtSummary summary;
  summary.residual_count = total_residuals(blocks);
  double cost = evaluate_cost(blocks, x);
  summary.initial_cost = cost;
  summary.cost_history.push_back(cost);

  double lambda = options.initial_lambda;
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    summary.iterations = iter + 1;
    if (cost == 0.0) {
      summary.converged = true;
      break;
    }
    accumulate_normal_equations(blocks, x, hessian, gradient);
    if (gradient.lpNorm<Eigen::Infinity>() == 0.0) {
      summary.converged = true;
      break;
    }

    bool accepted = false;
    bool stalled = false;
    while (!accepted) {
      Eigen::MatrixXd damped = hessian;
      for (Eigen::Index i = 0; i < damped.rows(); ++i) {
        damped(i, i) += lambda * std::max(hessian(i, i), 1e-12);
      }
      const Eigen::VectorXd step = damped.ldlt().solve(-gradient);
      const Eigen::VectorXd candidate = x + step;
      const double candidate_cost = step.allFinite() ? evaluate_cost(blocks, candidate) : INFINITY;

      if (std::isfinite(candidate_cost) && candidate_cost < cost) {
        const double rms_change = 1.0 - std::sqrt(candidate_cost / cost);
        x = candidate;
        cost = candidate_cost;
        summary.cost_history.push_back(cost);
        ++summary.accepted_steps;
        lambda = std::max(lambda / options.lambda_decrease, 1e-15);
        accepted = true;
        if (rms_change < options.relative_rms_tolerance) stalled = true;
      } else {
        lambda *= options.lambda_increase;
        if (lambda > 1e16) {
          stalled = true;
          break;
        }
      }
    }
    if (stalled) {
      summary.converged = true;
      break;
    }
  }

  summary.final_cost = cost;
  return summary;
}

}  // namespace stereofish
