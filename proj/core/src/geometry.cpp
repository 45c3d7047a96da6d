#include "stereofish/geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "stereofish/error.hpp"

namespace stereofish {

namespace {

bool all_finite(std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, skew, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d Intrinsics::inverse_matrix() const {
  // closed form inverse of the upper-triangular K
  Eigen::Matrix3d k;
  k << 1.0 / fx, -skew / (fx * fy), (skew * cy - cx * fy) / (fx * fy),
       0.0, 1.0 / fy, -cy / fy,
       0.0, 0.0, 1.0;
  return k;
}

Intrinsics Intrinsics::from_matrix(const Eigen::Matrix3d& k) {
  const Eigen::Matrix3d n = k / k(2, 2);
  return {n(0, 0), n(1, 1), n(0, 2), n(1, 2), n(0, 1)};
}

void Intrinsics::validate() const {
  if (!all_finite({fx, fy, cx, cy, skew})) {
    throw Error(ErrorCode::InvalidArgument, "intrinsics contain non-finite values");
  }
  if (fx <= 0.0 || fy <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  }
}

RigidTransform RigidTransform::from_rotation_vector(const Eigen::Vector3d& rvec, const Eigen::Vector3d& t) {
  const double angle = rvec.norm();
  if (angle == 0.0) return {Eigen::Matrix3d::Identity(), t};
  return {Eigen::AngleAxisd(angle, rvec / angle).toRotationMatrix(), t};
}

Eigen::Vector3d RigidTransform::rotation_vector() const {
  const Eigen::AngleAxisd aa(rotation_);
  return aa.axis() * aa.angle();
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return {rt, -rt * translation_};
}

void RigidTransform::validate(double tolerance) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "rigid transform contains non-finite values");
  }
  if ((rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tolerance ||
      std::abs(rotation_.determinant() - 1.0) > tolerance) {
    throw Error(ErrorCode::InvalidArgument, "rotation is not orthonormal with determinant +1");
  }
}

double orthonormality_defect(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).norm() + std::abs(r.determinant() - 1.0);
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

ProjectionMatrix CameraModel::projection_matrix() const {
  ProjectionMatrix rt;
  rt.leftCols<3>() = pose.rotation();
  rt.col(3) = pose.translation();
  return intrinsics.matrix() * rt;
}

StereoRig StereoRig::from_relative(const CameraModel& left_camera, const CameraModel& right_camera_at_origin,
                                   const RigidTransform& relative) {
  StereoRig rig;
  rig.left = left_camera;
  rig.left.pose = RigidTransform::identity();
  rig.right = right_camera_at_origin;
  rig.right.pose = relative;
  rig.relative = relative;
  return rig;
}

void StereoRig::validate(double tolerance) const {
  left.intrinsics.validate();
  right.intrinsics.validate();
  left.pose.validate();
  right.pose.validate();
  relative.validate();
  if (baseline() <= 0.0) {
    throw Error(ErrorCode::ZeroBaseline, "stereo rig has zero baseline");
  }
  const RigidTransform composed = right.pose * left.pose.inverse();
  const double rot_err = (composed.rotation() - relative.rotation()).cwiseAbs().maxCoeff();
  const double t_err = (composed.translation() - relative.translation()).cwiseAbs().maxCoeff();
  if (rot_err > tolerance || t_err > tolerance) {
    throw Error(ErrorCode::InvalidArgument, "relative transform inconsistent with camera poses");
  }
}

Eigen::Vector2d distort_normalized(const Eigen::Vector2d& xy, const DistortionCoefficients& d) {
  const double x = xy.x();
  const double y = xy.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
  return {xd, yd};
}

namespace {

Eigen::Vector2d to_normalized(const PixelPoint& p, const Intrinsics& intr) {
  const double y = (p.v - intr.cy) / intr.fy;
  const double x = (p.u - intr.cx - intr.skew * y) / intr.fx;
  return {x, y};
}

PixelPoint to_pixel(const Eigen::Vector2d& xy, const Intrinsics& intr) {
  return {intr.fx * xy.x() + intr.skew * xy.y() + intr.cx, intr.fy * xy.y() + intr.cy};
}

}  // namespace

PixelPoint distort_point(const PixelPoint& p, const Intrinsics& intr, const DistortionCoefficients& d) {
  return to_pixel(distort_normalized(to_normalized(p, intr), d), intr);
}

PixelPoint undistort_point(const PixelPoint& p, const Intrinsics& intr, const DistortionCoefficients& d,
                           int max_iterations) {
  if (d.is_identity()) return p;

  const Eigen::Vector2d target = to_normalized(p, intr);
  Eigen::Vector2d x = target;
  const double px_scale = std::max(intr.fx, intr.fy);
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::Vector2d redistorted = distort_normalized(x, d);
    const double residual_px = (redistorted - target).norm() * px_scale;
    if (!std::isfinite(residual_px)) break;
    if (residual_px < 1e-9) return to_pixel(x, intr);

    const double r2 = x.squaredNorm();
    const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    const double dx = 2.0 * d.p1 * x.x() * x.y() + d.p2 * (r2 + 2.0 * x.x() * x.x());
    const double dy = d.p1 * (r2 + 2.0 * x.y() * x.y()) + 2.0 * d.p2 * x.x() * x.y();
    x = Eigen::Vector2d((target.x() - dx) / radial, (target.y() - dy) / radial);
  }
  if ((distort_normalized(x, d) - target).norm() * px_scale < 1e-9 && x.allFinite()) {
    return to_pixel(x, intr);
  }
  throw Error(ErrorCode::NonConvergence,
              "undistortion did not converge for pixel (" + std::to_string(p.u) + ", " + std::to_string(p.v) + ")");
}

PixelPoint project(const WorldPoint& p, const CameraModel& cam) {
  const Eigen::Vector3d pc = cam.pose.apply(p.vec());
  if (std::abs(pc.z()) < 1e-12) {
    throw Error(ErrorCode::DegenerateDepth, "point lies on the camera principal plane");
  }
  const Eigen::Vector2d xy(pc.x() / pc.z(), pc.y() / pc.z());
  return to_pixel(distort_normalized(xy, cam.distortion), cam.intrinsics);
}

WorldPoint triangulate(const PixelPoint& left, const PixelPoint& right, const CameraModel& left_camera,
                       const CameraModel& right_camera) {
  const ProjectionMatrix pl = left_camera.projection_matrix();
  const ProjectionMatrix pr = right_camera.projection_matrix();

  Eigen::Matrix4d a;
  a.row(0) = left.u * pl.row(2) - pl.row(0);
  a.row(1) = left.v * pl.row(2) - pl.row(1);
  a.row(2) = right.u * pr.row(2) - pr.row(0);
  a.row(3) = right.v * pr.row(2) - pr.row(1);
  for (int i = 0; i < 4; ++i) {
    const double n = a.row(i).norm();
    if (n > 0.0) a.row(i) /= n;
  }

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d s = svd.singularValues();
  if (s(0) == 0.0 || (s(2) - s(3)) <= 1e-12 * s(0)) {
    throw Error(ErrorCode::ParallelRays, "triangulation rays are parallel");
  }
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-300) {
    throw Error(ErrorCode::ParallelRays, "triangulated point at infinity");
  }
  return WorldPoint::from(x.head<3>() / x(3));
}

}  // namespace stereofish
