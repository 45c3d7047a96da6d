#pragma once

// Ground-truth generators: synthetic stereo rigs, checkerboard corner sets,
// ellipsoid fish rendered to boxes, masks and identity features, and an
// exhaustive assignment oracle.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "stereofish/assignment.hpp"
#include "stereofish/calibration.hpp"
#include "stereofish/detection.hpp"
#include "stereofish/measurement.hpp"
#include "stereofish/random.hpp"

namespace stereofish {

struct SyntheticRigParams {
  Intrinsics left_intrinsics{1400.0, 1400.0, 960.0, 540.0, 0.0};
  Intrinsics right_intrinsics{1410.0, 1405.0, 955.0, 545.0, 0.0};
  DistortionCoefficients left_distortion{-0.05, 0.01, 2e-4, -1e-4, 0.0};
  DistortionCoefficients right_distortion{-0.04, 0.008, -1e-4, 1.5e-4, 0.0};
  double baseline_m = 0.8;
  double toe_in_rad = 0.02;  // each camera's inward yaw is half of this
  int width = 1920;
  int height = 1080;
};

/// Left camera at the origin, right camera centre at (baseline, 0, 0) in the
/// left frame, optical axes converging by toe_in_rad.
StereoRig make_synthetic_rig(const SyntheticRigParams& params, bool with_distortion = true);

struct ScenarioNoise {
  double corner_px = 0.0;        // Gaussian std of checkerboard corners
  int mask_dilation_px = 0;      // boundary dilation applied to rendered masks
  double feature_std = 0.0;      // norm of the feature perturbation
  double drop_probability = 0.0; // per detection, independent
};

struct ScenarioConfig {
  SyntheticRigParams rig;
  int n_fish = 3;
  int n_frames = 100;
  ScenarioNoise noise;
  std::uint64_t seed = 1;
  int feature_dim = kDefaultFeatureDimension;
  int n_classes = 120;
  int n_boards = 25;
  int board_rows = 5;
  int board_cols = 8;
  double board_pitch_m = 0.05;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct SyntheticFish {
  int identity = 0;
  int species = 0;
  double fork_length_m = 0.3;
  double height_m = 0.08;
  Eigen::Vector3d start = Eigen::Vector3d(0.0, 0.0, 2.0);  // left camera frame, m
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();      // m per frame
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();  // body -> left camera; body x = length
  std::vector<float> identity_feature;                     // unit norm

  Eigen::Vector3d position(int frame) const { return start + frame * velocity; }
  /// Semi-axes (L/2, H/2, H/4).
  Eigen::Vector3d semi_axes() const { return {0.5 * fork_length_m, 0.5 * height_m, 0.25 * height_m}; }
};

/// Fish on crossing constant-velocity paths through the common field of view.
std::vector<SyntheticFish> generate_fish(const ScenarioConfig& cfg);

/// Unit feature of the given dimension with a Gaussian perturbation of
/// expected norm `noise`, renormalised.
std::vector<float> noisy_feature(std::span<const float> identity, double noise, Rng& rng);

struct CheckerboardScenario {
  StereoRig truth;
  std::vector<CornerObservationSet> views;
};

/// Board poses in the 1-3 m working volume with varied orientation, every
/// corner visible in both images. fronto_parallel places every board facing
/// the left camera at one depth (a degenerate set for closed-form intrinsics).
CheckerboardScenario generate_checkerboard_observations(const ScenarioConfig& cfg, bool fronto_parallel = false);

/// Dual conic K [R|t] Q* [R|t]^T K^T of a fish body in a distortion-free camera.
Eigen::Matrix3d projected_dual_conic(const SyntheticFish& fish, int frame, const CameraModel& camera);

/// Bounding box of a dual conic from its vertical and horizontal tangent lines.
BoundingBox conic_bounding_box(const Eigen::Matrix3d& dual_conic);

/// Interior of the conic sampled at integer pixel centres.
BinaryMask rasterize_conic(const Eigen::Matrix3d& dual_conic);

struct RenderedFrame {
  int frame = 0;
  std::vector<DetectionRecord> left;  // raw image boxes, ids shuffled
  std::vector<DetectionRecord> right;
  std::vector<BinaryMask> left_masks;  // rectified, parallel to `left`
  std::vector<BinaryMask> right_masks;
  std::vector<int> left_fish;  // fish identity per detection
  std::vector<int> right_fish;
  std::vector<std::pair<int, int>> true_pairs;  // (left id, right id), sorted
};

/// Renders one frame through the distortion-free raw cameras (boxes) and the
/// rectified pair (masks). A fish is absent from a camera when its box leaves
/// the image, when it is not fully in front of the camera, or when dropped.
/// Deterministic in (cfg.seed, frame).
RenderedFrame render_fish_frame(std::span<const SyntheticFish> fish, int frame, const RectifiedStereo& stereo,
                                const ScenarioConfig& cfg);

/// Exhaustive maximum-cardinality, maximum-weight matching with the same
/// tie-breaking as solve_max_weight. Throws TooLarge when either side exceeds 8.
Matching brute_force_assignment(const WeightMatrix& m);

}  // namespace stereofish
