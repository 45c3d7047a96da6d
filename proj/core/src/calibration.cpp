#include "stereofish/calibration.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "stereofish/error.hpp"

namespace stereofish {

void CornerObservationSet::validate() const {
  if (board_points.size() < 4) {
    throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(frame_id) + " has fewer than 4 corners");
  }
  if (image_points_left.size() != board_points.size() || image_points_right.size() != board_points.size()) {
    throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(frame_id) + " has mismatched corner lists");
  }
  for (const auto& p : board_points) {
    if (p.z() != 0.0) {
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(frame_id) + " has non-planar board points");
    }
  }
}

namespace {

// Hartley normalisation: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * mean.x(),
       0.0, s, -s * mean.y(),
       0.0, 0.0, 1.0;
  return t;
}

Eigen::Matrix<double, 1, 6> conic_row(const Eigen::Matrix3d& h, int i, int j) {
  const Eigen::Vector3d hi = h.col(i);
  const Eigen::Vector3d hj = h.col(j);
  Eigen::Matrix<double, 1, 6> v;
  v << hi(0) * hj(0), hi(0) * hj(1) + hi(1) * hj(0), hi(1) * hj(1), hi(2) * hj(0) + hi(0) * hj(2),
      hi(2) * hj(1) + hi(1) * hj(2), hi(2) * hj(2);
  return v;
}

std::vector<Eigen::Vector2d> planar(const std::vector<Eigen::Vector3d>& board) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(board.size());
  for (const auto& p : board) out.emplace_back(p.x(), p.y());
  return out;
}

const std::vector<PixelPoint>& image_points(const CornerObservationSet& obs, Side side) {
  return side == Side::Left ? obs.image_points_left : obs.image_points_right;
}

// Parameter packing helpers. Intrinsics: fx fy cx cy skew. Distortion: k1 k2 p1 p2 k3.
void pack_camera(const Intrinsics& k, const DistortionCoefficients& d, double* out) {
  out[0] = k.fx; out[1] = k.fy; out[2] = k.cx; out[3] = k.cy; out[4] = k.skew;
  out[5] = d.k1; out[6] = d.k2; out[7] = d.p1; out[8] = d.p2; out[9] = d.k3;
}

Intrinsics unpack_intrinsics(const double* in) { return {in[0], in[1], in[2], in[3], in[4]}; }
DistortionCoefficients unpack_distortion(const double* in) { return {in[5], in[6], in[7], in[8], in[9]}; }

void pack_pose(const RigidTransform& t, double* out) {
  const Eigen::Vector3d r = t.rotation_vector();
  out[0] = r.x(); out[1] = r.y(); out[2] = r.z();
  out[3] = t.translation().x(); out[4] = t.translation().y(); out[5] = t.translation().z();
}

RigidTransform unpack_pose(const double* in) {
  return RigidTransform::from_rotation_vector({in[0], in[1], in[2]}, {in[3], in[4], in[5]});
}

// Projection of a camera-frame point; returns false for points behind the plane.
inline void project_camera_frame(const Eigen::Vector3d& pc, const double* cam, double* uv) {
  const Intrinsics k = unpack_intrinsics(cam);
  const DistortionCoefficients d = unpack_distortion(cam);
  const Eigen::Vector2d xd = distort_normalized({pc.x() / pc.z(), pc.y() / pc.z()}, d);
  uv[0] = k.fx * xd.x() + k.skew * xd.y() + k.cx;
  uv[1] = k.fy * xd.y() + k.cy;
}

constexpr int kCameraParams = 10;
constexpr int kPoseParams = 6;

}  // namespace

Eigen::Matrix3d estimate_homography(std::span<const Eigen::Vector2d> board, std::span<const PixelPoint> image) {
  if (board.size() < 4 || board.size() != image.size()) {
    throw Error(ErrorCode::InvalidArgument, "homography needs at least 4 paired correspondences");
  }
  std::vector<Eigen::Vector2d> img(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) img[i] = image[i].vec();

  const Eigen::Matrix3d tb = normalizing_transform(board);
  const Eigen::Matrix3d ti = normalizing_transform(img);

  const int n = static_cast<int>(board.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(std::max(2 * n, 9), 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d x = tb * board[i].homogeneous();
    const Eigen::Vector3d y = ti * img[i].homogeneous();
    a.block<1, 3>(2 * i, 0) = x.transpose();
    a.block<1, 3>(2 * i, 6) = -y.x() * x.transpose();
    a.block<1, 3>(2 * i + 1, 3) = x.transpose();
    a.block<1, 3>(2 * i + 1, 6) = -y.y() * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  if (s(0) == 0.0 || s(7) / s(0) < 1e-10) {
    throw Error(ErrorCode::DegenerateConfiguration, "homography correspondences are degenerate (collinear)");
  }
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  Eigen::Matrix3d h = ti.inverse() * hn * tb;
  if (std::abs(h(2, 2)) < 1e-300) {
    throw Error(ErrorCode::DegenerateConfiguration, "homography maps the board origin to infinity");
  }
  h /= h(2, 2);
  return h;
}

Intrinsics intrinsics_from_homographies(std::span<const Eigen::Matrix3d> homographies) {
  if (homographies.size() < 3) {
    throw Error(ErrorCode::InsufficientViews, "need at least 3 homographies, got " +
                                                  std::to_string(homographies.size()));
  }
  // Precondition pixel scale; T is upper triangular so T*K stays upper triangular.
  double scale = 0.0;
  for (const auto& h : homographies) scale += std::abs(h(0, 2) / h(2, 2)) + std::abs(h(1, 2) / h(2, 2));
  scale = scale > 0.0 ? (2.0 * static_cast<double>(homographies.size())) / scale : 1.0;
  const Eigen::Matrix3d t = Eigen::Vector3d(scale, scale, 1.0).asDiagonal();

  Eigen::MatrixXd v(2 * homographies.size(), 6);
  for (std::size_t i = 0; i < homographies.size(); ++i) {
    Eigen::Matrix3d h = t * homographies[i];
    h /= h.norm();
    v.row(2 * i) = conic_row(h, 0, 1);
    v.row(2 * i + 1) = conic_row(h, 0, 0) - conic_row(h, 1, 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  if (s(0) == 0.0 || s(4) / s(0) < 1e-9) {
    throw Error(ErrorCode::IllConditioned, "board orientations do not constrain the absolute conic");
  }
  Eigen::Matrix<double, 6, 1> b = svd.matrixV().col(5);
  if (b(0) < 0.0) b = -b;
  const double b11 = b(0), b12 = b(1), b22 = b(2), b13 = b(3), b23 = b(4), b33 = b(5);

  const double den = b11 * b22 - b12 * b12;
  if (b11 <= 0.0 || den <= 0.0) {
    throw Error(ErrorCode::IllConditioned, "absolute conic estimate is not positive-definite");
  }
  const double v0 = (b12 * b13 - b11 * b23) / den;
  const double lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
  if (lambda / b11 <= 0.0) {
    throw Error(ErrorCode::IllConditioned, "absolute conic estimate is not positive-definite");
  }
  const double alpha = std::sqrt(lambda / b11);
  const double beta = std::sqrt(lambda * b11 / den);
  const double gamma = -b12 * alpha * alpha * beta / lambda;
  const double u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;

  Eigen::Matrix3d kn;
  kn << alpha, gamma, u0, 0.0, beta, v0, 0.0, 0.0, 1.0;
  const Intrinsics out = Intrinsics::from_matrix(t.inverse() * kn);
  if (!(out.fx > 0.0) || !(out.fy > 0.0)) {
    throw Error(ErrorCode::IllConditioned, "recovered focal lengths are not positive");
  }
  return out;
}

RigidTransform extrinsics_from_homography(const Eigen::Matrix3d& h, const Intrinsics& intr) {
  const Eigen::Matrix3d m = intr.inverse_matrix() * h;
  const double n1 = m.col(0).norm();
  const double n2 = m.col(1).norm();
  if (n1 == 0.0 || n2 == 0.0) {
    throw Error(ErrorCode::DegenerateConfiguration, "homography has a null column");
  }
  double lambda = 2.0 / (n1 + n2);
  if (m(2, 2) < 0.0) lambda = -lambda;  // board in front of the camera
  const Eigen::Vector3d r1 = lambda * m.col(0);
  const Eigen::Vector3d r2 = lambda * m.col(1);
  Eigen::Matrix3d r;
  r.col(0) = r1;
  r.col(1) = r2;
  r.col(2) = r1.cross(r2);
  return {nearest_rotation(r), lambda * m.col(2)};
}

Eigen::Matrix3d average_rotation(std::span<const Eigen::Matrix3d> rotations) {
  if (rotations.empty()) return Eigen::Matrix3d::Identity();
  const Eigen::Quaterniond first(rotations.front());
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  for (const auto& r : rotations) {
    Eigen::Quaterniond q(r);
    if (q.dot(first) < 0.0) q.coeffs() = -q.coeffs();
    acc += q.coeffs();
  }
  Eigen::Quaterniond mean;
  mean.coeffs() = acc.normalized();
  return mean.toRotationMatrix();
}

MonoCalibration calibrate_mono(std::span<const CornerObservationSet> observations, Side side,
                               const LevenbergMarquardtOptions& options) {
  std::vector<Eigen::Matrix3d> homographies;
  homographies.reserve(observations.size());
  for (const auto& obs : observations) {
    obs.validate();
    homographies.push_back(estimate_homography(planar(obs.board_points), image_points(obs, side)));
  }
  const Intrinsics k0 = intrinsics_from_homographies(homographies);

  const int frames = static_cast<int>(observations.size());
  Eigen::VectorXd x(kCameraParams + kPoseParams * frames);
  pack_camera(k0, DistortionCoefficients{}, x.data());
  for (int f = 0; f < frames; ++f) {
    pack_pose(extrinsics_from_homography(homographies[f], k0), x.data() + kCameraParams + kPoseParams * f);
  }

  std::vector<ResidualBlock> blocks;
  for (int f = 0; f < frames; ++f) {
    const CornerObservationSet* obs = &observations[f];
    ResidualBlock block;
    for (int i = 0; i < kCameraParams; ++i) block.parameters.push_back(i);
    for (int i = 0; i < kPoseParams; ++i) block.parameters.push_back(kCameraParams + kPoseParams * f + i);
    block.residual_count = 2 * static_cast<int>(obs->board_points.size());
    block.evaluate = [obs, f, side](const Eigen::VectorXd& p, double* r) {
      const RigidTransform pose = unpack_pose(p.data() + kCameraParams + kPoseParams * f);
      const auto& img = image_points(*obs, side);
      for (std::size_t i = 0; i < obs->board_points.size(); ++i) {
        double uv[2];
        project_camera_frame(pose.apply(obs->board_points[i]), p.data(), uv);
        r[2 * i] = uv[0] - img[i].u;
        r[2 * i + 1] = uv[1] - img[i].v;
      }
    };
    blocks.push_back(std::move(block));
  }

  const LevenbergMarquardtSummary summary = minimize_levenberg_marquardt(blocks, x, options);

  MonoCalibration out;
  out.intrinsics = unpack_intrinsics(x.data());
  out.distortion = unpack_distortion(x.data());
  for (int f = 0; f < frames; ++f) out.board_poses.push_back(unpack_pose(x.data() + kCameraParams + kPoseParams * f));
  out.rms_reprojection_error = summary.final_rms();
  return out;
}

CalibrationResult initialize_stereo_calibration(std::span<const CornerObservationSet> observations,
                                                const LevenbergMarquardtOptions& options) {
  const MonoCalibration left = calibrate_mono(observations, Side::Left, options);
  const MonoCalibration right = calibrate_mono(observations, Side::Right, options);

  std::vector<Eigen::Matrix3d> rotations;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  for (std::size_t f = 0; f < observations.size(); ++f) {
    const RigidTransform rel = right.board_poses[f] * left.board_poses[f].inverse();
    rotations.push_back(rel.rotation());
    translation += rel.translation();
  }
  translation /= static_cast<double>(observations.size());
  const RigidTransform relative(average_rotation(rotations), translation);

  CameraModel cam_left{left.intrinsics, left.distortion, RigidTransform::identity()};
  CameraModel cam_right{right.intrinsics, right.distortion, RigidTransform::identity()};

  CalibrationResult result;
  result.rig = StereoRig::from_relative(cam_left, cam_right, relative);
  result.per_frame_board_poses = left.board_poses;
  result.rms_reprojection_error = reprojection_rms(result, observations);
  return result;
}

namespace {

constexpr int kSharedParams = 2 * kCameraParams + kPoseParams;

Eigen::VectorXd pack_stereo(const CalibrationResult& r) {
  const int frames = static_cast<int>(r.per_frame_board_poses.size());
  Eigen::VectorXd x(kSharedParams + kPoseParams * frames);
  pack_camera(r.rig.left.intrinsics, r.rig.left.distortion, x.data());
  pack_camera(r.rig.right.intrinsics, r.rig.right.distortion, x.data() + kCameraParams);
  pack_pose(r.rig.relative, x.data() + 2 * kCameraParams);
  for (int f = 0; f < frames; ++f) pack_pose(r.per_frame_board_poses[f], x.data() + kSharedParams + kPoseParams * f);
  return x;
}

CalibrationResult unpack_stereo(const Eigen::VectorXd& x, int frames) {
  CameraModel left{unpack_intrinsics(x.data()), unpack_distortion(x.data()), RigidTransform::identity()};
  CameraModel right{unpack_intrinsics(x.data() + kCameraParams), unpack_distortion(x.data() + kCameraParams),
                    RigidTransform::identity()};
  CalibrationResult r;
  r.rig = StereoRig::from_relative(left, right, unpack_pose(x.data() + 2 * kCameraParams));
  for (int f = 0; f < frames; ++f) r.per_frame_board_poses.push_back(unpack_pose(x.data() + kSharedParams + kPoseParams * f));
  return r;
}

std::vector<ResidualBlock> stereo_blocks(std::span<const CornerObservationSet> observations) {
  std::vector<ResidualBlock> blocks;
  for (int f = 0; f < static_cast<int>(observations.size()); ++f) {
    const CornerObservationSet* obs = &observations[f];
    ResidualBlock block;
    for (int i = 0; i < kSharedParams; ++i) block.parameters.push_back(i);
    for (int i = 0; i < kPoseParams; ++i) block.parameters.push_back(kSharedParams + kPoseParams * f + i);
    const int n = static_cast<int>(obs->board_points.size());
    block.residual_count = 4 * n;
    block.evaluate = [obs, f, n](const Eigen::VectorXd& p, double* r) {
      const RigidTransform board = unpack_pose(p.data() + kSharedParams + kPoseParams * f);
      const RigidTransform rel = unpack_pose(p.data() + 2 * kCameraParams);
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d pl = board.apply(obs->board_points[i]);
        double uv[2];
        project_camera_frame(pl, p.data(), uv);
        r[2 * i] = uv[0] - obs->image_points_left[i].u;
        r[2 * i + 1] = uv[1] - obs->image_points_left[i].v;
        project_camera_frame(rel.apply(pl), p.data() + kCameraParams, uv);
        r[2 * n + 2 * i] = uv[0] - obs->image_points_right[i].u;
        r[2 * n + 2 * i + 1] = uv[1] - obs->image_points_right[i].v;
      }
    };
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace

CalibrationResult refine_calibration(const CalibrationResult& initial,
                                     std::span<const CornerObservationSet> observations,
                                     const LevenbergMarquardtOptions& options) {
  if (initial.per_frame_board_poses.size() != observations.size()) {
    throw Error(ErrorCode::InvalidArgument, "initial calibration and observations disagree on frame count");
  }
  for (const auto& obs : observations) obs.validate();

  const std::vector<ResidualBlock> blocks = stereo_blocks(observations);
  Eigen::VectorXd x = pack_stereo(initial);
  const Eigen::VectorXd x0 = x;
  const LevenbergMarquardtSummary summary = minimize_levenberg_marquardt(blocks, x, options);

  CalibrationResult out;
  if (summary.accepted_steps == 0) {
    // keep the caller's values bit-for-bit
    out = initial;
  } else {
    out = unpack_stereo(x, static_cast<int>(observations.size()));
  }
  out.rms_reprojection_error = summary.final_rms();
  out.iterations = summary.iterations;
  out.accepted_steps = summary.accepted_steps;
  out.converged = summary.converged;
  return out;
}

CalibrationResult calibrate_stereo(std::span<const CornerObservationSet> observations,
                                   const LevenbergMarquardtOptions& options) {
  if (observations.size() < 3) {
    throw Error(ErrorCode::InsufficientViews, "stereo calibration needs at least 3 board views");
  }
  return refine_calibration(initialize_stereo_calibration(observations, options), observations, options);
}

double reprojection_rms(const CalibrationResult& result, std::span<const CornerObservationSet> observations) {
  const std::vector<ResidualBlock> blocks = stereo_blocks(observations);
  const Eigen::VectorXd x = pack_stereo(result);
  int count = 0;
  for (const auto& b : blocks) count += b.residual_count;
  return count > 0 ? std::sqrt(evaluate_cost(blocks, x) / count) : 0.0;
}

RectificationPair compute_rectification(const StereoRig& rig) {
  const Eigen::Matrix3d r = rig.relative.rotation();
  // right camera centre expressed in the left camera frame
  const Eigen::Vector3d c_right = -r.transpose() * rig.relative.translation();
  const double baseline = c_right.norm();
  if (!(baseline > 1e-12)) {
    throw Error(ErrorCode::ZeroBaseline, "camera centres coincide");
  }
  const Eigen::Vector3d e1 = c_right / baseline;
  // mean optical axis of both cameras, in left coordinates
  const Eigen::Vector3d axis = (Eigen::Vector3d::UnitZ() + r.transpose() * Eigen::Vector3d::UnitZ()).normalized();
  Eigen::Vector3d e2 = axis.cross(e1);
  if (e2.norm() < 1e-12) {
    throw Error(ErrorCode::ZeroBaseline, "baseline is parallel to the optical axis");
  }
  e2.normalize();
  const Eigen::Vector3d e3 = e1.cross(e2);

  RectificationPair out;
  out.rotation_left.row(0) = e1.transpose();
  out.rotation_left.row(1) = e2.transpose();
  out.rotation_left.row(2) = e3.transpose();
  out.rotation_right = out.rotation_left * r.transpose();

  const Intrinsics& kl = rig.left.intrinsics;
  const Intrinsics& kr = rig.right.intrinsics;
  out.new_intrinsics = {0.5 * (kl.fx + kr.fx), 0.5 * (kl.fy + kr.fy), 0.5 * (kl.cx + kr.cx), 0.5 * (kl.cy + kr.cy),
                        0.0};
  return out;
}

namespace {

PixelPoint map_through(const PixelPoint& p, const Eigen::Matrix3d& homography) {
  const Eigen::Vector3d q = homography * Eigen::Vector3d(p.u, p.v, 1.0);
  if (std::abs(q.z()) < 1e-12) {
    throw Error(ErrorCode::DegenerateDepth, "rectified ray is parallel to the image plane");
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

const Eigen::Matrix3d& side_rotation(const RectificationPair& rect, Side side) {
  return side == Side::Left ? rect.rotation_left : rect.rotation_right;
}

}  // namespace

PixelPoint rectify_point(const PixelPoint& p, const CameraModel& cam, const RectificationPair& rect, Side side) {
  const Eigen::Vector3d ray = side_rotation(rect, side) * cam.intrinsics.inverse_matrix() * Eigen::Vector3d(p.u, p.v, 1.0);
  if (std::abs(ray.z()) < 1e-12) {
    throw Error(ErrorCode::DegenerateDepth, "rectified ray is parallel to the image plane");
  }
  const Eigen::Vector3d q = rect.new_intrinsics.matrix() * ray;
  return {q.x() / q.z(), q.y() / q.z()};
}

PixelPoint unrectify_point(const PixelPoint& p, const CameraModel& cam, const RectificationPair& rect, Side side) {
  const Eigen::Matrix3d h =
      cam.intrinsics.matrix() * side_rotation(rect, side).transpose() * rect.new_intrinsics.inverse_matrix();
  return map_through(p, h);
}

RectifiedStereo make_rectified(const StereoRig& rig) {
  RectifiedStereo out;
  out.raw = rig;
  out.rectification = compute_rectification(rig);
  out.left = CameraModel{out.rectification.new_intrinsics, {}, RigidTransform::identity()};
  out.right = CameraModel{out.rectification.new_intrinsics, {},
                          RigidTransform(Eigen::Matrix3d::Identity(), {-rig.baseline(), 0.0, 0.0})};
  return out;
}

PixelPoint RectifiedStereo::rectify_raw(const PixelPoint& raw_pixel, Side side) const {
  const CameraModel& cam = side == Side::Left ? raw.left : raw.right;
  const PixelPoint ideal = undistort_point(raw_pixel, cam.intrinsics, cam.distortion);
  return rectify_point(ideal, cam, rectification, side);
}

}  // namespace stereofish
