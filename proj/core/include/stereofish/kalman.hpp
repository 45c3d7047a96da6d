#pragma once

// Constant-velocity Kalman filter over (u, v, aspect, h) box observations.
// State: [u, v, aspect, h, du, dv, daspect, dh]; u, v is the box centre and
// aspect = w / h. Process and observation noise scale with the box height.

#include <Eigen/Core>

#include "stereofish/detection.hpp"

namespace stereofish {

using StateVector = Eigen::Matrix<double, 8, 1>;
using StateCovariance = Eigen::Matrix<double, 8, 8>;
using BoxObservation = Eigen::Vector4d;

struct KalmanNoise {
  double position_weight = 1.0 / 20.0;
  double velocity_weight = 1.0 / 160.0;
  double aspect_std = 1e-2;
  double aspect_velocity_std = 1e-5;
  double aspect_measurement_std = 1e-1;
  double measurement_scale = 1.0;  // multiplies every observation std
};

struct KalmanState {
  StateVector mean = StateVector::Zero();
  StateCovariance covariance = StateCovariance::Identity();

  /// Symmetric within 1e-9 and Cholesky-decomposable.
  bool is_valid() const;
};

struct ProjectedState {
  BoxObservation mean;
  Eigen::Matrix4d covariance;  // innovation covariance H P H^T + R
};

BoxObservation to_observation(const BoundingBox& box);
BoundingBox to_box(const BoxObservation& obs);

KalmanState kalman_initiate(const BoxObservation& obs, const KalmanNoise& noise = {});

/// Advances by dt frames: F(dt) P F(dt)^T + dt * Q.
KalmanState kalman_predict(const KalmanState& s, double dt = 1.0, const KalmanNoise& noise = {});

ProjectedState kalman_project(const KalmanState& s, const KalmanNoise& noise = {});

/// Joseph-form update; box height clamped to stay positive.
/// Throws SingularInnovation when H P H^T + R is not positive-definite.
KalmanState kalman_update(const KalmanState& s, const BoxObservation& obs, const KalmanNoise& noise = {});

double squared_mahalanobis(const KalmanState& s, const BoxObservation& obs, const KalmanNoise& noise = {});

}  // namespace stereofish
