#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "stereofish/calibration.hpp"
#include "stereofish/error.hpp"
#include "stereofish/least_squares.hpp"
#include "stereofish/synthetic.hpp"

using namespace stereofish;

namespace {

Eigen::Matrix3d homography_from_pose(const Intrinsics& k, const RigidTransform& pose) {
  Eigen::Matrix3d rt;
  rt.col(0) = pose.rotation().col(0);
  rt.col(1) = pose.rotation().col(1);
  rt.col(2) = pose.translation();
  Eigen::Matrix3d h = k.matrix() * rt;
  return h / h(2, 2);
}

RigidTransform random_board_pose(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> tilt(-0.6, 0.6), shift(-0.3, 0.3), depth(1.0, 3.0);
  return RigidTransform::from_rotation_vector({tilt(gen), tilt(gen), 0.5 * tilt(gen)},
                                              {shift(gen), shift(gen), depth(gen)});
}

std::vector<Eigen::Vector2d> grid(int rows, int cols, double pitch) {
  std::vector<Eigen::Vector2d> out;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.emplace_back(c * pitch, r * pitch);
  return out;
}

std::vector<PixelPoint> map_points(const Eigen::Matrix3d& h, const std::vector<Eigen::Vector2d>& pts) {
  std::vector<PixelPoint> out;
  for (const auto& p : pts) {
    const Eigen::Vector3d q = h * Eigen::Vector3d(p.x(), p.y(), 1.0);
    out.push_back({q.x() / q.z(), q.y() / q.z()});
  }
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

template <typename Fn>
void expect_code(ErrorCode code, Fn&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Homography, IdentityFromUnitSquare) {
  const std::vector<Eigen::Vector2d> board{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const std::vector<PixelPoint> image{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const Eigen::Matrix3d h = estimate_homography(board, image);
  EXPECT_LT((h - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Homography, RecoversKnownMapping) {
  Eigen::Matrix3d h;
  h << 1.2, 0.1, 300.0, -0.05, 0.9, 200.0, 1e-4, 2e-4, 1.0;
  const auto board = grid(5, 8, 0.05);
  std::vector<Eigen::Vector2d> scaled;
  for (const auto& p : board) scaled.push_back(p * 1000.0);
  const Eigen::Matrix3d est = estimate_homography(scaled, map_points(h, scaled));
  EXPECT_LT((est - h).norm() / h.norm(), 1e-8);
}

TEST(Homography, CollinearPointsRejected) {
  const std::vector<Eigen::Vector2d> board{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  const std::vector<PixelPoint> image{{0, 0}, {10, 0}, {20, 0}, {30, 0}};
  expect_code(ErrorCode::DegenerateConfiguration, [&] { estimate_homography(board, image); });
}

TEST(ClosedFormIntrinsics, RecoversSyntheticCamera) {
  std::mt19937_64 gen(21);
  const Intrinsics k{1400.0, 1400.0, 960.0, 540.0, 0.0};
  std::vector<Eigen::Matrix3d> hs;
  for (int i = 0; i < 5; ++i) hs.push_back(homography_from_pose(k, random_board_pose(gen)));
  const Intrinsics est = intrinsics_from_homographies(hs);
  EXPECT_LT(rel(est.fx, k.fx), 1e-6);
  EXPECT_LT(rel(est.fy, k.fy), 1e-6);
  EXPECT_LT(rel(est.cx, k.cx), 1e-6);
  EXPECT_LT(rel(est.cy, k.cy), 1e-6);
  EXPECT_LT(std::abs(est.skew), 1e-6 * k.fx);
}

TEST(ClosedFormIntrinsics, TwoViewsAreInsufficient) {
  std::mt19937_64 gen(2);
  const Intrinsics k{1400.0, 1400.0, 960.0, 540.0, 0.0};
  std::vector<Eigen::Matrix3d> hs{homography_from_pose(k, random_board_pose(gen)),
                                  homography_from_pose(k, random_board_pose(gen))};
  expect_code(ErrorCode::InsufficientViews, [&] { intrinsics_from_homographies(hs); });
}

TEST(ClosedFormIntrinsics, IdenticalOrientationsIllConditioned) {
  const Intrinsics k{1400.0, 1400.0, 960.0, 540.0, 0.0};
  std::vector<Eigen::Matrix3d> hs;
  for (int i = 0; i < 3; ++i) {
    hs.push_back(homography_from_pose(k, RigidTransform(Eigen::Matrix3d::Identity(), {0.1 * i, -0.05 * i, 2.0 + 0.3 * i})));
  }
  expect_code(ErrorCode::IllConditioned, [&] { intrinsics_from_homographies(hs); });
}

TEST(BoardPose, RoundTripFromHomography) {
  std::mt19937_64 gen(8);
  const Intrinsics k{1400.0, 1390.0, 960.0, 540.0, 0.0};
  for (int i = 0; i < 20; ++i) {
    const RigidTransform pose = random_board_pose(gen);
    const RigidTransform est = extrinsics_from_homography(homography_from_pose(k, pose), k);
    EXPECT_LT((est.rotation() - pose.rotation()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((est.translation() - pose.translation()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT(orthonormality_defect(est.rotation()), 1e-9);
  }
}

TEST(BoardPose, IdentityHomography) {
  const RigidTransform est = extrinsics_from_homography(Eigen::Matrix3d::Identity(), Intrinsics{});
  EXPECT_LT((est.rotation() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((est.translation() - Eigen::Vector3d(0, 0, 1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BoardPose, OrthonormalOnNoisyInput) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Eigen::Matrix3d h;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h(r, c) = n(gen);
    h(2, 2) = std::abs(h(2, 2)) + 1.0;
    EXPECT_LT(orthonormality_defect(extrinsics_from_homography(h, Intrinsics{}).rotation()), 1e-9);
  }
}

TEST(LevenbergMarquardt, FitsExponentialCurve) {
  // y = a * exp(b * t) sampled without noise
  const double a = 2.5, b = -0.7;
  std::vector<ResidualBlock> blocks;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.1 * i;
    const double y = a * std::exp(b * t);
    blocks.push_back({{0, 1}, 1, [t, y](const Eigen::VectorXd& x, double* r) { r[0] = x[0] * std::exp(x[1] * t) - y; }});
  }
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  const auto summary = minimize_levenberg_marquardt(blocks, x);
  EXPECT_NEAR(x[0], a, 1e-8);
  EXPECT_NEAR(x[1], b, 1e-8);
  EXPECT_LE(summary.final_cost, summary.initial_cost);
  for (std::size_t i = 1; i < summary.cost_history.size(); ++i) {
    EXPECT_LE(summary.cost_history[i], summary.cost_history[i - 1]);
  }
}

TEST(StereoCalibration, NoiselessRecoversEveryParameter) {
  ScenarioConfig cfg;
  cfg.seed = 17;
  const CheckerboardScenario sc = generate_checkerboard_observations(cfg);
  ASSERT_EQ(sc.views.size(), 25u);
  const CalibrationResult res = calibrate_stereo(sc.views);
  EXPECT_LT(res.rms_reprojection_error, 1e-8);

  const auto check_camera = [](const CameraModel& est, const CameraModel& truth) {
    EXPECT_LT(rel(est.intrinsics.fx, truth.intrinsics.fx), 1e-5);
    EXPECT_LT(rel(est.intrinsics.fy, truth.intrinsics.fy), 1e-5);
    EXPECT_LT(rel(est.intrinsics.cx, truth.intrinsics.cx), 1e-5);
    EXPECT_LT(rel(est.intrinsics.cy, truth.intrinsics.cy), 1e-5);
    EXPECT_LT(std::abs(est.intrinsics.skew), 1e-5 * truth.intrinsics.fx);
    EXPECT_LT(rel(est.distortion.k1, truth.distortion.k1), 1e-5);
    EXPECT_LT(rel(est.distortion.k2, truth.distortion.k2), 1e-5);
    EXPECT_LT(rel(est.distortion.p1, truth.distortion.p1), 1e-5);
    EXPECT_LT(rel(est.distortion.p2, truth.distortion.p2), 1e-5);
  };
  check_camera(res.rig.left, sc.truth.left);
  check_camera(res.rig.right, sc.truth.right);
  EXPECT_LT((res.rig.relative.rotation() - sc.truth.relative.rotation()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((res.rig.relative.translation() - sc.truth.relative.translation()).norm() / sc.truth.baseline(), 1e-5);
}

TEST(StereoCalibration, RefiningAnOptimumChangesNothing) {
  ScenarioConfig cfg;
  cfg.seed = 5;
  const CheckerboardScenario sc = generate_checkerboard_observations(cfg);
  const CalibrationResult first = calibrate_stereo(sc.views);
  const CalibrationResult again = refine_calibration(first, sc.views);
  EXPECT_LE(again.rms_reprojection_error, first.rms_reprojection_error + 1e-12);
  EXPECT_LT(std::abs(again.rig.left.intrinsics.fx - first.rig.left.intrinsics.fx), 1e-6);
}

TEST(StereoCalibration, RmsDoesNotIncreaseUnderNoise) {
  ScenarioConfig cfg;
  cfg.seed = 9;
  cfg.noise.corner_px = 0.2;
  const CheckerboardScenario sc = generate_checkerboard_observations(cfg);
  const CalibrationResult init = initialize_stereo_calibration(sc.views);
  const CalibrationResult refined = refine_calibration(init, sc.views);
  EXPECT_LE(refined.rms_reprojection_error, reprojection_rms(init, sc.views) + 1e-12);
  EXPECT_LT(rel(refined.rig.left.intrinsics.fx, sc.truth.left.intrinsics.fx), 5e-3);
  EXPECT_LT(rel(refined.rig.right.intrinsics.fx, sc.truth.right.intrinsics.fx), 5e-3);
}

TEST(StereoCalibration, FrontoParallelBoardsRejected) {
  ScenarioConfig cfg;
  const CheckerboardScenario sc = generate_checkerboard_observations(cfg, true);
  expect_code(ErrorCode::IllConditioned, [&] { calibrate_stereo(sc.views); });
}

TEST(StereoCalibration, TooFewViews) {
  ScenarioConfig cfg;
  CheckerboardScenario sc = generate_checkerboard_observations(cfg);
  sc.views.resize(2);
  expect_code(ErrorCode::InsufficientViews, [&] { calibrate_stereo(sc.views); });
}

TEST(Rectification, AlreadyRectifiedRigIsFixedPoint) {
  const CameraModel cam{Intrinsics{1000, 1000, 960, 540, 0}, {}, RigidTransform::identity()};
  const StereoRig rig = StereoRig::from_relative(cam, cam, RigidTransform(Eigen::Matrix3d::Identity(), {-0.8, 0, 0}));
  const RectificationPair r = compute_rectification(rig);
  EXPECT_LT((r.rotation_left - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.rotation_right - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rectification, YawedRigSharesRows) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> xy(-1.0, 1.0), z(1.0, 5.0);
  const CameraModel left{Intrinsics{1400, 1400, 960, 540, 0}, {}, RigidTransform::identity()};
  const CameraModel right{Intrinsics{1410, 1405, 955, 545, 0}, {}, RigidTransform::identity()};
  const double yaw = 5.0 * M_PI / 180.0;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const StereoRig rig = StereoRig::from_relative(left, right, RigidTransform(r, -r * Eigen::Vector3d(0.8, 0, 0)));
  const RectificationPair rect = compute_rectification(rig);
  EXPECT_LT(orthonormality_defect(rect.rotation_left), 1e-12);
  EXPECT_LT(orthonormality_defect(rect.rotation_right), 1e-12);
  for (int i = 0; i < 100; ++i) {
    const WorldPoint w{xy(gen), xy(gen), z(gen)};
    const PixelPoint pl = rectify_point(project(w, rig.left), rig.left, rect, Side::Left);
    const PixelPoint pr = rectify_point(project(w, rig.right), rig.right, rect, Side::Right);
    EXPECT_LT(std::abs(pl.v - pr.v), 1e-9);
  }
  // rectified relative transform: rotation identity, translation along x
  const Eigen::Matrix3d rel_rot = rect.rotation_right * rig.relative.rotation() * rect.rotation_left.transpose();
  const Eigen::Vector3d rel_t = rect.rotation_right * rig.relative.translation();
  EXPECT_LT((rel_rot - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(std::abs(rel_t.y()), 1e-9);
  EXPECT_LT(std::abs(rel_t.z()), 1e-9);
}

TEST(Rectification, CoincidentCamerasRejected) {
  const CameraModel cam{Intrinsics{1000, 1000, 960, 540, 0}, {}, RigidTransform::identity()};
  StereoRig rig{cam, cam, RigidTransform::identity()};
  expect_code(ErrorCode::ZeroBaseline, [&] { compute_rectification(rig); });
}

TEST(Rectification, IdentityLeavesPointUnchanged) {
  const CameraModel cam{Intrinsics{1000, 1000, 960, 540, 0}, {}, RigidTransform::identity()};
  RectificationPair rect;
  rect.new_intrinsics = cam.intrinsics;
  const PixelPoint p = rectify_point({123.0, 456.0}, cam, rect, Side::Left);
  EXPECT_NEAR(p.u, 123.0, 1e-12);
  EXPECT_NEAR(p.v, 456.0, 1e-12);
}

TEST(Rectification, RoundTrip) {
  const StereoRig rig = make_synthetic_rig(SyntheticRigParams{}, false);
  const RectificationPair rect = compute_rectification(rig);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0, 1920), v(0, 1080);
  for (int i = 0; i < 200; ++i) {
    const PixelPoint p{u(gen), v(gen)};
    for (Side s : {Side::Left, Side::Right}) {
      const CameraModel& cam = s == Side::Left ? rig.left : rig.right;
      const PixelPoint back = unrectify_point(rectify_point(p, cam, rect, s), cam, rect, s);
      EXPECT_NEAR(back.u, p.u, 1e-9);
      EXPECT_NEAR(back.v, p.v, 1e-9);
    }
  }
}

TEST(Rectification, RectifiedStereoGeometry) {
  const RectifiedStereo st = make_rectified(make_synthetic_rig(SyntheticRigParams{}, true));
  EXPECT_NEAR(st.baseline(), 0.8, 1e-12);
  EXPECT_LT((st.right.pose.translation() - Eigen::Vector3d(-0.8, 0, 0)).norm(), 1e-9);
  // a raw distorted observation lands on the same rectified row in both views
  const WorldPoint w{0.3, -0.2, 2.2};
  const PixelPoint l = st.rectify_raw(project(w, st.raw.left), Side::Left);
  const PixelPoint r = st.rectify_raw(project(w, st.raw.right), Side::Right);
  EXPECT_LT(std::abs(l.v - r.v), 1e-6);
}
