#include "stereofish/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "stereofish/error.hpp"

namespace stereofish {

namespace {

Eigen::Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix(); }
Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

std::vector<float> random_unit_feature(int dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(dim);
  for (int i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

bool inside_image(const BoundingBox& b, int width, int height) {
  return b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= width && b.y + b.h <= height && b.w > 0.0 && b.h > 0.0;
}

// Rigid map from the fish body frame into a camera frame.
RigidTransform body_to_camera(const SyntheticFish& fish, int frame, const CameraModel& camera) {
  return camera.pose * RigidTransform(fish.orientation, fish.position(frame));
}

bool fully_in_front(const SyntheticFish& fish, int frame, const CameraModel& camera, double margin = 0.05) {
  const RigidTransform t = body_to_camera(fish, frame, camera);
  const Eigen::Vector3d a = fish.semi_axes();
  const Eigen::Matrix3d shape = t.rotation() * a.cwiseProduct(a).asDiagonal() * t.rotation().transpose();
  return t.translation().z() - std::sqrt(shape(2, 2)) > margin;
}

std::vector<ClassScore> synthetic_top5(int species, int n_classes, Rng& rng) {
  std::vector<double> scores(5);
  scores[0] = rng.uniform(0.45, 0.9);
  for (int k = 1; k < 5; ++k) scores[k] = scores[k - 1] * rng.uniform(0.2, 0.7);
  const int true_rank = rng.bernoulli(0.85) ? 0 : static_cast<int>(rng.uniform_int(1, 4));
  std::vector<int> classes(5, -1);
  classes[true_rank] = species;
  for (int k = 0; k < 5; ++k) {
    if (classes[k] >= 0) continue;
    int c;
    do {
      c = static_cast<int>(rng.uniform_int(0, n_classes - 1));
    } while (std::find(classes.begin(), classes.end(), c) != classes.end());
    classes[k] = c;
  }
  std::vector<ClassScore> out;
  for (int k = 0; k < 5; ++k) out.push_back({classes[k], scores[k]});
  return out;
}

}  // namespace

StereoRig make_synthetic_rig(const SyntheticRigParams& params, bool with_distortion) {
  CameraModel left{params.left_intrinsics, with_distortion ? params.left_distortion : DistortionCoefficients{},
                   RigidTransform::identity()};
  CameraModel right{params.right_intrinsics, with_distortion ? params.right_distortion : DistortionCoefficients{},
                    RigidTransform::identity()};
  // Right camera -> left frame: yaw inward by toe_in about y.
  const Eigen::Matrix3d right_to_left = rot_y(-params.toe_in_rad);
  const Eigen::Vector3d center(params.baseline_m, 0.0, 0.0);
  const Eigen::Matrix3d r = right_to_left.transpose();
  const RigidTransform relative(r, -r * center);
  return StereoRig::from_relative(left, right, relative);
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (n_fish < 0) fail("n_fish must be non-negative");
  if (n_frames < 0) fail("n_frames must be non-negative");
  if (feature_dim < 1) fail("feature_dim must be positive");
  if (n_classes < 5) fail("n_classes must be at least 5");
  if (n_fish > n_classes) fail("n_fish exceeds n_classes");
  if (!(noise.corner_px >= 0.0)) fail("corner noise must be non-negative");
  if (noise.mask_dilation_px < 0) fail("mask dilation must be non-negative");
  if (!(noise.feature_std >= 0.0)) fail("feature noise must be non-negative");
  if (!(noise.drop_probability >= 0.0 && noise.drop_probability <= 1.0)) fail("drop probability must be in [0, 1]");
  if (n_boards < 0) fail("n_boards must be non-negative");
  if (board_rows < 2 || board_cols < 2) fail("board needs at least 2x2 corners");
  if (!(board_pitch_m > 0.0)) fail("board pitch must be positive");
  if (!(rig.baseline_m > 0.0)) fail("baseline must be positive");
  if (rig.width < 1 || rig.height < 1) fail("image size must be positive");
  try {
    rig.left_intrinsics.validate();
    rig.right_intrinsics.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::vector<float> noisy_feature(std::span<const float> identity, double noise, Rng& rng) {
  const std::size_t dim = identity.size();
  std::vector<double> v(identity.begin(), identity.end());
  if (noise > 0.0 && dim > 0) {
    const double sigma = noise / std::sqrt(static_cast<double>(dim));
    for (auto& x : v) x += rng.normal(0.0, sigma);
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  std::vector<float> out(dim, 0.0f);
  if (norm2 <= 0.0) return out;
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

std::vector<SyntheticFish> generate_fish(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::derive_seed(cfg.seed, 0));
  const auto& p = cfg.rig;
  const double b = p.baseline_m;

  std::vector<int> species(cfg.n_classes);
  for (int i = 0; i < cfg.n_classes; ++i) species[i] = i;
  rng.shuffle(std::span<int>(species));

  std::vector<SyntheticFish> out;
  for (int i = 0; i < cfg.n_fish; ++i) {
    SyntheticFish f;
    f.identity = i;
    f.species = species[i];
    f.fork_length_m = rng.uniform(0.22, 0.42);
    f.height_m = f.fork_length_m * rng.uniform(0.22, 0.30);

    const double z = 1.5 + 1.5 * (i + rng.uniform(0.2, 0.8)) / std::max(1, cfg.n_fish);
    const double half_span = std::max(0.05, z * 0.5 * p.width / p.left_intrinsics.fx - 0.5 * b - 0.3);
    const double half_rise = std::max(0.02, z * 0.5 * p.height / p.left_intrinsics.fy - 0.15);
    const double side = i % 2 == 0 ? 1.0 : -1.0;
    const Eigen::Vector3d p0(0.5 * b + side * half_span * rng.uniform(0.7, 1.0), rng.uniform(-0.5, 0.5) * half_rise, z);
    const Eigen::Vector3d p1(0.5 * b - side * half_span * rng.uniform(0.7, 1.0), rng.uniform(-0.5, 0.5) * half_rise,
                             z + rng.uniform(-0.1, 0.1));
    f.start = p0;
    f.velocity = (p1 - p0) / std::max(1, cfg.n_frames - 1);

    double yaw = rng.uniform(-0.5, 0.5);
    if (f.velocity.x() < 0.0) yaw += std::numbers::pi;
    f.orientation = rot_y(yaw) * rot_z(rng.uniform(-0.15, 0.15)) * rot_x(rng.uniform(-0.3, 0.3));
    f.identity_feature = random_unit_feature(cfg.feature_dim, rng);
    out.push_back(std::move(f));
  }
  return out;
}

CheckerboardScenario generate_checkerboard_observations(const ScenarioConfig& cfg, bool fronto_parallel) {
  cfg.validate();
  Rng rng(Rng::derive_seed(cfg.seed, 1));
  CheckerboardScenario out;
  out.truth = make_synthetic_rig(cfg.rig, true);
  const auto& p = cfg.rig;

  std::vector<Eigen::Vector3d> board;
  for (int r = 0; r < cfg.board_rows; ++r) {
    for (int c = 0; c < cfg.board_cols; ++c) board.emplace_back(c * cfg.board_pitch_m, r * cfg.board_pitch_m, 0.0);
  }
  const Eigen::Vector3d board_center(0.5 * (cfg.board_cols - 1) * cfg.board_pitch_m,
                                     0.5 * (cfg.board_rows - 1) * cfg.board_pitch_m, 0.0);

  auto visible = [&](const CameraModel& cam, const Eigen::Vector3d& x) {
    const Eigen::Vector3d xc = cam.pose.apply(x);
    if (xc.z() < 0.1) return false;
    const PixelPoint px = project(WorldPoint::from(x), cam);
    return px.u >= 10.0 && px.v >= 10.0 && px.u <= p.width - 10.0 && px.v <= p.height - 10.0;
  };

  for (int k = 0; k < cfg.n_boards; ++k) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const double depth = fronto_parallel ? 2.0 : rng.uniform(1.0, 3.0);
      const Eigen::Vector3d center(0.5 * p.baseline_m + rng.uniform(-0.25, 0.25) * depth,
                                   rng.uniform(-0.15, 0.15) * depth, depth);
      const Eigen::Matrix3d rot = fronto_parallel
                                      ? rot_z(rng.uniform(-0.3, 0.3))
                                      : Eigen::Matrix3d(rot_z(rng.uniform(-0.3, 0.3)) * rot_x(rng.uniform(-0.6, 0.6)) *
                                                        rot_y(rng.uniform(-0.6, 0.6)));
      const RigidTransform pose(rot, center - rot * board_center);

      bool ok = true;
      for (const auto& bp : board) {
        const Eigen::Vector3d x = pose.apply(bp);
        if (!visible(out.truth.left, x) || !visible(out.truth.right, x)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;

      CornerObservationSet view;
      view.frame_id = k;
      view.board_points = board;
      for (const auto& bp : board) {
        const WorldPoint x = WorldPoint::from(pose.apply(bp));
        PixelPoint l = project(x, out.truth.left);
        PixelPoint r = project(x, out.truth.right);
        if (cfg.noise.corner_px > 0.0) {
          l.u += rng.normal(0.0, cfg.noise.corner_px);
          l.v += rng.normal(0.0, cfg.noise.corner_px);
          r.u += rng.normal(0.0, cfg.noise.corner_px);
          r.v += rng.normal(0.0, cfg.noise.corner_px);
        }
        view.image_points_left.push_back(l);
        view.image_points_right.push_back(r);
      }
      out.views.push_back(std::move(view));
      break;
    }
  }
  return out;
}

Eigen::Matrix3d projected_dual_conic(const SyntheticFish& fish, int frame, const CameraModel& camera) {
  const RigidTransform t = body_to_camera(fish, frame, camera);
  Eigen::Matrix4d tm = Eigen::Matrix4d::Identity();
  tm.topLeftCorner<3, 3>() = t.rotation();
  tm.topRightCorner<3, 1>() = t.translation();
  const Eigen::Vector3d a = fish.semi_axes();
  const Eigen::Vector4d diag(a.x() * a.x(), a.y() * a.y(), a.z() * a.z(), -1.0);
  const Eigen::Matrix4d q = tm * diag.asDiagonal() * tm.transpose();
  Eigen::Matrix<double, 3, 4> pm = Eigen::Matrix<double, 3, 4>::Zero();
  pm.leftCols<3>() = camera.intrinsics.matrix();
  Eigen::Matrix3d c = pm * q * pm.transpose();
  c = 0.5 * (c + c.transpose());
  return c / c.cwiseAbs().maxCoeff();
}

BoundingBox conic_bounding_box(const Eigen::Matrix3d& c) {
  // Tangent line (1, 0, -u): c00 - 2 u c02 + u^2 c22 = 0, likewise for v.
  auto roots = [&](int i) {
    const double disc = std::sqrt(std::max(0.0, c(i, 2) * c(i, 2) - c(2, 2) * c(i, i)));
    const double r0 = (c(i, 2) - disc) / c(2, 2);
    const double r1 = (c(i, 2) + disc) / c(2, 2);
    return std::make_pair(std::min(r0, r1), std::max(r0, r1));
  };
  const auto [u0, u1] = roots(0);
  const auto [v0, v1] = roots(1);
  return {u0, v0, u1 - u0, v1 - v0};
}

BinaryMask rasterize_conic(const Eigen::Matrix3d& dual_conic) {
  const BoundingBox box = conic_bounding_box(dual_conic);
  const Eigen::Matrix3d conic = dual_conic.inverse();
  const Eigen::Vector3d center(dual_conic(0, 2) / dual_conic(2, 2), dual_conic(1, 2) / dual_conic(2, 2), 1.0);
  const double inside_sign = center.dot(conic * center) < 0.0 ? -1.0 : 1.0;

  const int u0 = static_cast<int>(std::ceil(box.x));
  const int v0 = static_cast<int>(std::ceil(box.y));
  const int u1 = static_cast<int>(std::floor(box.x + box.w));
  const int v1 = static_cast<int>(std::floor(box.y + box.h));
  if (u1 < u0 || v1 < v0) return BinaryMask(0, 0, u0, v0);
  BinaryMask mask(u1 - u0 + 1, v1 - v0 + 1, u0, v0);
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const Eigen::Vector3d x(u, v, 1.0);
      if (inside_sign * x.dot(conic * x) > 0.0) mask.set(u - u0, v - v0);
    }
  }
  return mask;
}

RenderedFrame render_fish_frame(std::span<const SyntheticFish> fish, int frame, const RectifiedStereo& stereo,
                                const ScenarioConfig& cfg) {
  if (!stereo.raw.left.distortion.is_identity() || !stereo.raw.right.distortion.is_identity()) {
    throw Error(ErrorCode::InvalidArgument, "rendering requires distortion-free cameras");
  }
  Rng rng(Rng::derive_seed(cfg.seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(frame)));

  // Rectified cameras expressed in the raw left frame.
  const RigidTransform to_rect(stereo.rectification.rotation_left, Eigen::Vector3d::Zero());
  const CameraModel rect_left{stereo.left.intrinsics, {}, stereo.left.pose * to_rect};
  const CameraModel rect_right{stereo.right.intrinsics, {}, stereo.right.pose * to_rect};

  struct Emitted {
    DetectionRecord det;
    BinaryMask mask;
    int fish = 0;
  };
  std::vector<Emitted> lefts, rights;

  auto render = [&](const SyntheticFish& f, const CameraModel& raw, const CameraModel& rect, std::vector<Emitted>& out) {
    const bool dropped = rng.bernoulli(cfg.noise.drop_probability);
    if (dropped) return;
    if (!fully_in_front(f, frame, raw) || !fully_in_front(f, frame, rect)) return;
    const BoundingBox box = conic_bounding_box(projected_dual_conic(f, frame, raw));
    if (!inside_image(box, cfg.rig.width, cfg.rig.height)) return;
    BinaryMask mask = rasterize_conic(projected_dual_conic(f, frame, rect));
    if (cfg.noise.mask_dilation_px > 0) mask = mask.dilated(cfg.noise.mask_dilation_px);
    Emitted e;
    e.det.frame = frame;
    e.det.box = box;
    e.det.confidence = rng.uniform(0.6, 1.0);
    e.det.feature = noisy_feature(f.identity_feature, cfg.noise.feature_std, rng);
    e.det.top5 = synthetic_top5(f.species, cfg.n_classes, rng);
    e.mask = std::move(mask);
    e.fish = f.identity;
    out.push_back(std::move(e));
  };

  for (const auto& f : fish) {
    render(f, stereo.raw.left, rect_left, lefts);
    render(f, stereo.raw.right, rect_right, rights);
  }

  RenderedFrame out;
  out.frame = frame;
  auto finish = [&](std::vector<Emitted>& emitted, std::vector<DetectionRecord>& dets, std::vector<BinaryMask>& masks,
                    std::vector<int>& ids) {
    rng.shuffle(std::span<Emitted>(emitted));
    for (std::size_t i = 0; i < emitted.size(); ++i) {
      emitted[i].det.id = static_cast<int>(i);
      dets.push_back(emitted[i].det);
      masks.push_back(std::move(emitted[i].mask));
      ids.push_back(emitted[i].fish);
    }
  };
  finish(lefts, out.left, out.left_masks, out.left_fish);
  finish(rights, out.right, out.right_masks, out.right_fish);

  for (std::size_t i = 0; i < out.left.size(); ++i) {
    for (std::size_t j = 0; j < out.right.size(); ++j) {
      if (out.left_fish[i] == out.right_fish[j]) out.true_pairs.emplace_back(out.left[i].id, out.right[j].id);
    }
  }
  std::sort(out.true_pairs.begin(), out.true_pairs.end());
  return out;
}

Matching brute_force_assignment(const WeightMatrix& m) {
  constexpr std::size_t kMaxSide = 8;
  if (m.rows() > kMaxSide || m.cols() > kMaxSide) {
    throw Error(ErrorCode::TooLarge, "brute force is limited to 8x8");
  }
  double max_abs = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (m.allowed(r, c)) max_abs = std::max(max_abs, std::abs(m.weight(r, c)));
    }
  }
  const double tolerance = 1e-9 * (1.0 + max_abs);

  Matching best;
  bool have_best = false;
  std::vector<std::pair<std::size_t, std::size_t>> current;
  std::vector<char> used(m.cols(), 0);

  std::function<void(std::size_t, double)> visit = [&](std::size_t r, double total) {
    if (r == m.rows()) {
      bool better = false;
      if (!have_best || current.size() > best.pairs.size()) {
        better = true;
      } else if (current.size() == best.pairs.size()) {
        if (total > best.objective + tolerance) {
          better = true;
        } else if (total >= best.objective - tolerance && current < best.pairs) {
          better = true;
        }
      }
      if (better) {
        best.pairs = current;
        best.objective = total;
        have_best = true;
      }
      return;
    }
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (used[c] || m.forbidden(r, c)) continue;
      used[c] = 1;
      current.emplace_back(r, c);
      visit(r + 1, total + m.weight(r, c));
      current.pop_back();
      used[c] = 0;
    }
    visit(r + 1, total);
  };
  visit(0, 0.0);
  return best;
}

}  // namespace stereofish
