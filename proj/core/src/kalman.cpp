#include "stereofish/kalman.hpp"

#include <algorithm>

#include <Eigen/Cholesky>

#include "stereofish/error.hpp"

namespace stereofish {

namespace {

using ObservationMatrix = Eigen::Matrix<double, 4, 8>;

ObservationMatrix observation_matrix() {
  ObservationMatrix h = ObservationMatrix::Zero();
  h.leftCols<4>().setIdentity();
  return h;
}

StateCovariance transition(double dt) {
  StateCovariance f = StateCovariance::Identity();
  for (int i = 0; i < 4; ++i) f(i, 4 + i) = dt;
  return f;
}

Eigen::Matrix4d observation_noise(double h, const KalmanNoise& n) {
  Eigen::Vector4d std(n.position_weight * h, n.position_weight * h, n.aspect_measurement_std, n.position_weight * h);
  std *= n.measurement_scale;
  return std.cwiseProduct(std).asDiagonal();
}

constexpr double kMinHeight = 1e-6;

}  // namespace

bool KalmanState::is_valid() const {
  if (!mean.allFinite() || !covariance.allFinite()) return false;
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, covariance.cwiseAbs().maxCoeff())) {
    return false;
  }
  return Eigen::LLT<StateCovariance>(covariance).info() == Eigen::Success;
}

BoxObservation to_observation(const BoundingBox& box) {
  return {box.center_u(), box.center_v(), box.aspect_ratio(), box.h};
}

BoundingBox to_box(const BoxObservation& obs) {
  const double w = obs(2) * obs(3);
  return {obs(0) - 0.5 * w, obs(1) - 0.5 * obs(3), w, obs(3)};
}

KalmanState kalman_initiate(const BoxObservation& obs, const KalmanNoise& noise) {
  KalmanState s;
  s.mean.head<4>() = obs;
  s.mean.tail<4>().setZero();
  const double h = obs(3);
  StateVector std;
  std << 2.0 * noise.position_weight * h, 2.0 * noise.position_weight * h, noise.aspect_std,
      2.0 * noise.position_weight * h, 10.0 * noise.velocity_weight * h, 10.0 * noise.velocity_weight * h,
      noise.aspect_velocity_std, 10.0 * noise.velocity_weight * h;
  s.covariance = std.cwiseProduct(std).asDiagonal();
  return s;
}

KalmanState kalman_predict(const KalmanState& s, double dt, const KalmanNoise& noise) {
  const double h = s.mean(3);
  StateVector std;
  std << noise.position_weight * h, noise.position_weight * h, noise.aspect_std, noise.position_weight * h,
      noise.velocity_weight * h, noise.velocity_weight * h, noise.aspect_velocity_std, noise.velocity_weight * h;
  const StateCovariance q = (dt * std.cwiseProduct(std)).asDiagonal();
  const StateCovariance f = transition(dt);

  KalmanState out;
  out.mean = f * s.mean;
  out.covariance = f * s.covariance * f.transpose() + q;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

ProjectedState kalman_project(const KalmanState& s, const KalmanNoise& noise) {
  const ObservationMatrix hm = observation_matrix();
  ProjectedState p;
  p.mean = hm * s.mean;
  p.covariance = hm * s.covariance * hm.transpose() + observation_noise(s.mean(3), noise);
  return p;
}

KalmanState kalman_update(const KalmanState& s, const BoxObservation& obs, const KalmanNoise& noise) {
  const ObservationMatrix hm = observation_matrix();
  const Eigen::Matrix4d r = observation_noise(s.mean(3), noise);
  const Eigen::Matrix4d innovation_cov = hm * s.covariance * hm.transpose() + r;
  const Eigen::LLT<Eigen::Matrix4d> llt(innovation_cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularInnovation, "innovation covariance is not positive-definite");
  }
  // K = P H^T S^-1
  const Eigen::Matrix<double, 8, 4> gain = llt.solve(hm * s.covariance).transpose();
  const BoxObservation innovation = obs - hm * s.mean;

  KalmanState out;
  out.mean = s.mean + gain * innovation;
  out.mean(3) = std::max(out.mean(3), kMinHeight);
  const StateCovariance ikh = StateCovariance::Identity() - gain * hm;
  out.covariance = ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

double squared_mahalanobis(const KalmanState& s, const BoxObservation& obs, const KalmanNoise& noise) {
  const ProjectedState p = kalman_project(s, noise);
  const Eigen::LLT<Eigen::Matrix4d> llt(p.covariance);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularInnovation, "innovation covariance is not positive-definite");
  }
  const Eigen::Vector4d z = llt.matrixL().solve(obs - p.mean);
  return z.squaredNorm();
}

}  // namespace stereofish
