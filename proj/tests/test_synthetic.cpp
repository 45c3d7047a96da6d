#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "stereofish/error.hpp"
#include "stereofish/random.hpp"
#include "stereofish/synthetic.hpp"

using namespace stereofish;

namespace {

double norm(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Rng, ReproducibleAndBounded) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const auto k = a.uniform_int(-3, 4);
    b.uniform_int(-3, 4);
    EXPECT_GE(k, -3);
    EXPECT_LE(k, 4);
  }
  EXPECT_NE(Rng::derive_seed(1, 0), Rng::derive_seed(1, 1));
  EXPECT_NE(Rng::derive_seed(1, 0), Rng::derive_seed(2, 0));
}

TEST(Rng, NormalMoments) {
  Rng r(7);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(1.0, 2.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 1.0, 0.03);
  EXPECT_NEAR(var, 4.0, 0.08);
}

TEST(SyntheticRig, BaselineAndToeIn) {
  const StereoRig rig = make_synthetic_rig(SyntheticRigParams{});
  EXPECT_NO_THROW(rig.validate());
  EXPECT_NEAR(rig.baseline(), 0.8, 1e-12);
  EXPECT_NEAR((rig.right.center() - Eigen::Vector3d(0.8, 0, 0)).norm(), 0.0, 1e-12);
  const double angle = std::acos(std::clamp(rig.relative.rotation().trace() * 0.5 - 0.5, -1.0, 1.0));
  EXPECT_NEAR(angle, 0.02, 1e-12);
  EXPECT_FALSE(rig.left.distortion.is_identity());
  EXPECT_TRUE(make_synthetic_rig(SyntheticRigParams{}, false).left.distortion.is_identity());
}

TEST(Checkerboard, ShapeAndDeterminism) {
  ScenarioConfig cfg;
  const CheckerboardScenario a = generate_checkerboard_observations(cfg);
  const CheckerboardScenario b = generate_checkerboard_observations(cfg);
  ASSERT_EQ(a.views.size(), 25u);
  for (std::size_t i = 0; i < a.views.size(); ++i) {
    ASSERT_EQ(a.views[i].board_points.size(), 40u);
    for (const auto& p : a.views[i].board_points) EXPECT_EQ(p.z(), 0.0);
    for (std::size_t k = 0; k < 40; ++k) {
      EXPECT_EQ(a.views[i].image_points_left[k], b.views[i].image_points_left[k]);
      const PixelPoint& q = a.views[i].image_points_right[k];
      EXPECT_GE(q.u, 0.0);
      EXPECT_LT(q.u, 1920.0);
      EXPECT_GE(q.v, 0.0);
      EXPECT_LT(q.v, 1080.0);
    }
  }
}

TEST(Fish, PathsStayInWorkingVolume) {
  ScenarioConfig cfg;
  cfg.n_fish = 6;
  const auto fish = generate_fish(cfg);
  ASSERT_EQ(fish.size(), 6u);
  std::set<int> ids;
  for (const auto& f : fish) {
    ids.insert(f.identity);
    EXPECT_GT(f.fork_length_m, 0.0);
    EXPECT_GT(f.height_m, 0.0);
    EXPECT_NEAR(norm(f.identity_feature), 1.0, 1e-5);
    EXPECT_EQ(static_cast<int>(f.identity_feature.size()), cfg.feature_dim);
    for (int t = 0; t < cfg.n_frames; ++t) {
      EXPECT_GE(f.position(t).z(), 0.5);
      EXPECT_LE(f.position(t).z(), 5.0);
    }
  }
  EXPECT_EQ(ids.size(), 6u);
}

TEST(Fish, NoisyFeatureIsUnitAndNear) {
  ScenarioConfig cfg;
  const auto fish = generate_fish(cfg);
  Rng rng(3);
  const auto same = noisy_feature(fish[0].identity_feature, 0.0, rng);
  EXPECT_EQ(same, fish[0].identity_feature);
  const auto n = noisy_feature(fish[0].identity_feature, 0.05, rng);
  EXPECT_NEAR(norm(n), 1.0, 1e-5);
  double dot = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) dot += static_cast<double>(n[i]) * fish[0].identity_feature[i];
  EXPECT_GT(dot, 0.99);
}

namespace {

// Centre of the silhouette's bounding box from the planes x = m z (and y = m z)
// tangent to the ellipsoid: (n.A.n) = (n.c)^2 with n = (1, 0, -m).
PixelPoint silhouette_centre(const SyntheticFish& f, const Intrinsics& k) {
  const Eigen::Vector3d ax = f.semi_axes();
  const Eigen::Matrix3d a = f.orientation * ax.cwiseProduct(ax).asDiagonal() * f.orientation.transpose();
  const Eigen::Vector3d c = f.start;
  auto mid_slope = [&](int i) {
    // (A_ii - c_i^2) - 2 m (A_iz - c_i c_z) + m^2 (A_zz - c_z^2) = 0; midpoint = -b / 2a.
    const double qa = a(2, 2) - c.z() * c.z();
    const double qb = -2.0 * (a(i, 2) - c(i) * c.z());
    return -qb / (2.0 * qa);
  };
  return {k.fx * mid_slope(0) + k.cx, k.fy * mid_slope(1) + k.cy};
}

}  // namespace

TEST(Render, MaskExtentFollowsPinholeScaling) {
  const CameraModel cam{Intrinsics{1000, 1000, 960, 540, 0}, {}, RigidTransform::identity()};
  SyntheticFish f;
  f.fork_length_m = 0.30;
  f.height_m = 0.08;
  f.start = {0.0, 0.0, 2.0};
  const Eigen::Matrix3d c = projected_dual_conic(f, 0, cam);
  const BinaryMask m = rasterize_conic(c);
  const ExtremePointSet e = mask_pca(m);
  EXPECT_NEAR(e.major_pos.u - e.major_neg.u, 1000.0 * 0.30 / 2.0, 2.0);
  // Silhouette edges are tangent planes through the optical centre; the depth
  // semi-axis (H/4) widens the outline slightly beyond f * L / z.
  const double depth_semi = 0.08 / 4.0;
  const double scale = 1.0 / std::sqrt(2.0 * 2.0 - depth_semi * depth_semi);
  const BoundingBox b = conic_bounding_box(c);
  EXPECT_NEAR(b.w, 1000.0 * 0.30 * scale, 1e-6);
  EXPECT_NEAR(b.h, 1000.0 * 0.08 * scale, 1e-6);
  EXPECT_NEAR(b.center_u(), 960.0, 1e-9);
}

TEST(Render, MaskCentroidReprojectsToBodyCentre) {
  const CameraModel cam{Intrinsics{1400, 1400, 960, 540, 0}, {}, RigidTransform::identity()};
  for (double z : {1.0, 1.7, 2.5, 3.0}) {
    SyntheticFish f;
    f.fork_length_m = 0.3;
    f.height_m = 0.08;
    f.start = {0.2, -0.1, z};
    f.orientation = Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const ExtremePointSet e = mask_pca(rasterize_conic(projected_dual_conic(f, 0, cam)));
    const PixelPoint p = silhouette_centre(f, cam.intrinsics);
    EXPECT_LT(std::hypot(e.barycenter.u - p.u, e.barycenter.v - p.v), 0.5) << z;
  }
}

TEST(Render, ParallaxSeparatesFishOnOneRay) {
  const StereoRig rig = make_synthetic_rig(SyntheticRigParams{}, false);
  const Eigen::Vector3d ray = Eigen::Vector3d(0.1, 0.05, 1.0).normalized();
  const PixelPoint near_r = project(WorldPoint::from(ray * 1.2), rig.right);
  const PixelPoint far_r = project(WorldPoint::from(ray * 2.8), rig.right);
  const PixelPoint near_l = project(WorldPoint::from(ray * 1.2), rig.left);
  const PixelPoint far_l = project(WorldPoint::from(ray * 2.8), rig.left);
  EXPECT_NEAR(near_l.u, far_l.u, 1e-9);
  EXPECT_NEAR(near_l.v, far_l.v, 1e-9);
  EXPECT_GT(std::abs(near_r.u - far_r.u), 50.0);
  EXPECT_GT(std::abs(near_r.v - far_r.v), 1e-6);
}

TEST(Render, FrameIsConsistentAndDeterministic) {
  ScenarioConfig cfg;
  cfg.n_fish = 5;
  cfg.feature_dim = 32;
  const RectifiedStereo st = make_rectified(make_synthetic_rig(cfg.rig, false));
  const auto fish = generate_fish(cfg);
  for (int frame : {0, 25, 50, 99}) {
    const RenderedFrame a = render_fish_frame(fish, frame, st, cfg);
    const RenderedFrame b = render_fish_frame(fish, frame, st, cfg);
    ASSERT_EQ(a.left.size(), b.left.size());
    ASSERT_EQ(a.left.size(), a.left_masks.size());
    ASSERT_EQ(a.right.size(), a.right_masks.size());
    std::set<int> lids, rids;
    for (std::size_t i = 0; i < a.left.size(); ++i) {
      EXPECT_EQ(a.left[i].box, b.left[i].box);
      EXPECT_EQ(a.left[i].feature, b.left[i].feature);
      EXPECT_EQ(a.left[i].frame, frame);
      lids.insert(a.left[i].id);
    }
    for (const auto& d : a.right) rids.insert(d.id);
    for (auto [l, r] : a.true_pairs) {
      EXPECT_TRUE(lids.count(l));
      EXPECT_TRUE(rids.count(r));
    }
    for (std::size_t i = 0; i < a.left.size(); ++i) {
      EXPECT_EQ(a.left[i].top5.size(), 5u);
      const auto it = std::find_if(fish.begin(), fish.end(), [&](const SyntheticFish& f) { return f.identity == a.left_fish[i]; });
      ASSERT_NE(it, fish.end());
      const auto& top5 = a.left[i].top5;
      EXPECT_TRUE(std::any_of(top5.begin(), top5.end(), [&](const ClassScore& c) { return c.class_id == it->species; }));
      EXPECT_TRUE(std::is_sorted(top5.begin(), top5.end(),
                                 [](const ClassScore& x, const ClassScore& y) { return x.score > y.score; }));
    }
  }
}

TEST(Render, DropEverything) {
  ScenarioConfig cfg;
  cfg.feature_dim = 16;
  cfg.noise.drop_probability = 1.0;
  const RectifiedStereo st = make_rectified(make_synthetic_rig(cfg.rig, false));
  const auto fish = generate_fish(cfg);
  for (int frame = 0; frame < cfg.n_frames; ++frame) {
    const RenderedFrame r = render_fish_frame(fish, frame, st, cfg);
    EXPECT_TRUE(r.left.empty());
    EXPECT_TRUE(r.right.empty());
    EXPECT_TRUE(r.true_pairs.empty());
  }
}

TEST(Render, DistortedRigRejected) {
  ScenarioConfig cfg;
  const RectifiedStereo st = make_rectified(make_synthetic_rig(cfg.rig, true));
  try {
    render_fish_frame(generate_fish(cfg), 0, st, cfg);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(BruteForce, TwoByTwoAndSevenBySeven) {
  WeightMatrix m(2, 2);
  m.set(0, 0, 0.3);
  m.set(0, 1, 0.9);
  m.set(1, 0, 0.5);
  m.set(1, 1, 0.2);
  EXPECT_EQ(brute_force_assignment(m).pairs, solve_max_weight(m).pairs);

  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    WeightMatrix w(7, 7);
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 7; ++c) {
        w.set(r, c, rng.uniform(-1, 1));
        if (rng.bernoulli(0.3)) w.forbid(r, c);
      }
    const Matching a = brute_force_assignment(w), b = solve_max_weight(w);
    EXPECT_EQ(a.pairs, b.pairs);
    EXPECT_NEAR(a.objective, b.objective, 1e-9);
  }
}

TEST(Scenario, ValidateRejectsBadProbability) {
  ScenarioConfig cfg;
  cfg.noise.drop_probability = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.noise.drop_probability = 0.1;
  cfg.n_fish = -1;
  EXPECT_THROW(cfg.validate(), Error);
}
