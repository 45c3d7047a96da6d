#pragma once

// Pinhole camera model with Brown-Conrady distortion, rigid transforms,
// stereo rigs, and two-view triangulation.
//
// Conventions:
//  * pixel coordinates are (u, v) with u to the right and v down;
//  * CameraModel::pose maps world coordinates into the camera frame;
//  * StereoRig::relative maps left-camera coordinates into the right camera
//    frame, i.e. relative = right.pose * left.pose.inverse().

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace stereofish {

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector2d vec() const { return {u, v}; }
  static PixelPoint from(const Eigen::Vector2d& p) { return {p.x(), p.y()}; }
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static WorldPoint from(const Eigen::Vector3d& p) { return {p.x(), p.y(), p.z()}; }
  friend bool operator==(const WorldPoint&, const WorldPoint&) = default;
};

/// Camera intrinsics in pixels. The skew term couples v into u:
/// u = fx * x + skew * y + cx.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse_matrix() const;
  static Intrinsics from_matrix(const Eigen::Matrix3d& k);

  /// Throws InvalidArgument unless fx, fy > 0 and all values are finite.
  void validate() const;
};

struct DistortionCoefficients {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double k3 = 0.0;

  bool is_identity() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0 && k3 == 0.0; }
};

class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  /// Builds from an axis-angle vector (direction = axis, norm = angle in radians).
  static RigidTransform from_rotation_vector(const Eigen::Vector3d& rvec, const Eigen::Vector3d& t);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Vector3d rotation_vector() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;

  /// (a * b).apply(p) == a.apply(b.apply(p))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_};
  }

  /// Throws InvalidArgument when the rotation is not orthonormal with det +1 (tolerance 1e-9).
  void validate(double tolerance = 1e-9) const;

 private:
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

/// Frobenius distance of R^T R from identity plus |det R - 1|.
double orthonormality_defect(const Eigen::Matrix3d& r);

/// Nearest rotation in the Frobenius sense.
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

struct CameraModel {
  Intrinsics intrinsics;
  DistortionCoefficients distortion;
  RigidTransform pose;  // world -> camera

  /// K * [R | t]
  ProjectionMatrix projection_matrix() const;
  Eigen::Vector3d center() const { return -pose.rotation().transpose() * pose.translation(); }
};

struct StereoRig {
  CameraModel left;
  CameraModel right;
  RigidTransform relative;  // left camera frame -> right camera frame

  /// Builds a rig whose world frame is the left camera frame.
  static StereoRig from_relative(const CameraModel& left_camera, const CameraModel& right_camera_at_origin,
                                 const RigidTransform& relative);

  double baseline() const { return relative.translation().norm(); }

  /// Throws InvalidArgument on zero baseline, invalid components, or when
  /// relative disagrees with the two poses by more than the tolerance.
  void validate(double tolerance = 1e-6) const;
};

// --- distortion -----------------------------------------------------------

/// Forward Brown-Conrady model on normalized image coordinates.
Eigen::Vector2d distort_normalized(const Eigen::Vector2d& xy, const DistortionCoefficients& d);

/// Maps an ideal (undistorted) pixel to the pixel observed through the lens.
PixelPoint distort_point(const PixelPoint& p, const Intrinsics& intr, const DistortionCoefficients& d);

/// Inverse of distort_point by fixed-point iteration in normalized coordinates.
/// Throws NonConvergence when the re-distortion residual does not fall below
/// 1e-9 px within max_iterations.
PixelPoint undistort_point(const PixelPoint& p, const Intrinsics& intr, const DistortionCoefficients& d,
                           int max_iterations = 50);

// --- projection / triangulation ------------------------------------------

/// Projects a world point through pose, distortion and intrinsics.
/// Throws DegenerateDepth when the camera-frame depth is below 1e-12 in magnitude.
PixelPoint project(const WorldPoint& p, const CameraModel& cam);

/// Linear (DLT) two-view triangulation of undistorted pixels.
/// Throws ParallelRays when the 4x4 system has a two-dimensional null space.
WorldPoint triangulate(const PixelPoint& left, const PixelPoint& right, const CameraModel& left_camera,
                       const CameraModel& right_camera);

/// Rectified-row gate: |v_left - v_right| <= delta (inclusive).
// Inclusive, with 1e-9 px slack so rectification round-off does not flip boundary cases.
inline bool epipolar_gate(const PixelPoint& left, const PixelPoint& right, double delta) {
  return std::abs(left.v - right.v) <= delta + 1e-9;
}

}  // namespace stereofish
