#pragma once

// Planar (checkerboard) stereo calibration and calibrated rectification.
//
// Pipeline: per-view DLT homographies -> closed-form intrinsics from the image
// of the absolute conic -> per-view board poses -> per-camera Levenberg-Marquardt
// (intrinsics, distortion, board poses) -> relative pose initialisation by
// rotation averaging -> joint Levenberg-Marquardt over both cameras.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "stereofish/geometry.hpp"
#include "stereofish/least_squares.hpp"

namespace stereofish {

/// One stereo view of the calibration board. Board points are planar (z = 0)
/// and ordered identically to both image point lists.
struct CornerObservationSet {
  int frame_id = 0;
  std::vector<Eigen::Vector3d> board_points;
  std::vector<PixelPoint> image_points_left;
  std::vector<PixelPoint> image_points_right;

  void validate() const;
};

struct CalibrationResult {
  StereoRig rig;
  std::vector<RigidTransform> per_frame_board_poses;  // board -> left camera
  double rms_reprojection_error = 0.0;                // px, over both cameras
  int iterations = 0;
  int accepted_steps = 0;
  bool converged = true;
};

/// Rotations that bring each camera frame into the common rectified frame,
/// plus the intrinsics shared by both rectified views.
struct RectificationPair {
  Eigen::Matrix3d rotation_left = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation_right = Eigen::Matrix3d::Identity();
  Intrinsics new_intrinsics;
};

enum class Side { Left, Right };

/// Rectified pinhole pair (zero distortion) expressed in the rectified left
/// camera frame: left pose identity, right pose (I, (-baseline, 0, 0)).
struct RectifiedStereo {
  StereoRig raw;
  RectificationPair rectification;
  CameraModel left;
  CameraModel right;

  double baseline() const { return raw.baseline(); }

  /// Maps a raw (distorted) pixel into rectified image coordinates.
  PixelPoint rectify_raw(const PixelPoint& raw_pixel, Side side) const;
};

// --- closed-form stage ----------------------------------------------------

/// Normalized DLT homography mapping board (x, y) to image pixels, H(2,2) = 1.
/// Throws InvalidArgument with fewer than 4 points and DegenerateConfiguration
/// for collinear correspondences.
Eigen::Matrix3d estimate_homography(std::span<const Eigen::Vector2d> board, std::span<const PixelPoint> image);

/// Zhang's closed-form solution. Throws InsufficientViews (< 3 homographies)
/// and IllConditioned when the conic system is rank deficient or the
/// recovered conic is not positive-definite.
Intrinsics intrinsics_from_homographies(std::span<const Eigen::Matrix3d> homographies);

/// Board -> camera pose from a homography; rotation projected onto SO(3).
RigidTransform extrinsics_from_homography(const Eigen::Matrix3d& h, const Intrinsics& intr);

/// Quaternion mean with sign alignment to the first sample.
Eigen::Matrix3d average_rotation(std::span<const Eigen::Matrix3d> rotations);

// --- refinement -----------------------------------------------------------

struct MonoCalibration {
  Intrinsics intrinsics;
  DistortionCoefficients distortion;
  std::vector<RigidTransform> board_poses;  // board -> camera
  double rms_reprojection_error = 0.0;
};

/// Closed-form initialisation plus Levenberg-Marquardt for one camera.
MonoCalibration calibrate_mono(std::span<const CornerObservationSet> observations, Side side,
                               const LevenbergMarquardtOptions& options = {});

/// Closed-form (mono) stages and relative pose averaging, without the joint refinement.
CalibrationResult initialize_stereo_calibration(std::span<const CornerObservationSet> observations,
                                                const LevenbergMarquardtOptions& options = {});

/// Joint Levenberg-Marquardt over both cameras' intrinsics and distortion,
/// the relative pose, and every board pose. The rms never increases.
/// converged == false flags that the iteration budget ran out (best iterate kept).
CalibrationResult refine_calibration(const CalibrationResult& initial,
                                     std::span<const CornerObservationSet> observations,
                                     const LevenbergMarquardtOptions& options = {});

/// initialize_stereo_calibration followed by refine_calibration.
CalibrationResult calibrate_stereo(std::span<const CornerObservationSet> observations,
                                   const LevenbergMarquardtOptions& options = {});

/// Root-mean-square reprojection error (px) of a result over both cameras.
double reprojection_rms(const CalibrationResult& result, std::span<const CornerObservationSet> observations);

// --- rectification --------------------------------------------------------

/// Calibrated rectification: both new x-axes follow the baseline.
/// Throws ZeroBaseline when the camera centres coincide.
RectificationPair compute_rectification(const StereoRig& rig);

/// Maps an undistorted pixel into the rectified view of the given side.
/// Throws DegenerateDepth when the rotated ray is parallel to the image plane.
PixelPoint rectify_point(const PixelPoint& p, const CameraModel& cam, const RectificationPair& rect, Side side);

/// Inverse of rectify_point.
PixelPoint unrectify_point(const PixelPoint& p, const CameraModel& cam, const RectificationPair& rect, Side side);

RectifiedStereo make_rectified(const StereoRig& rig);

}  // namespace stereofish
