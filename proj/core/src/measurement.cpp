#include "stereofish/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stereofish/error.hpp"

namespace stereofish {

BinaryMask::BinaryMask(int width, int height, int origin_x, int origin_y)
    : width_(width), height_(height), origin_x_(origin_x), origin_y_(origin_y) {
  if (width < 0 || height < 0) {
    throw Error(ErrorCode::InvalidArgument, "mask dimensions must be non-negative");
  }
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

bool BinaryMask::contains_image_pixel(int u, int v) const {
  const int col = u - origin_x_;
  const int row = v - origin_y_;
  if (col < 0 || row < 0 || col >= width_ || row >= height_) return false;
  return at(col, row);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::int64_t> BinaryMask::to_rle() const {
  std::vector<std::int64_t> rle;
  const auto n = static_cast<std::int64_t>(bits_.size());
  std::int64_t i = 0;
  while (i < n) {
    if (!bits_[i]) {
      ++i;
      continue;
    }
    const std::int64_t start = i;
    while (i < n && bits_[i]) ++i;
    rle.push_back(start);
    rle.push_back(i - start);
  }
  return rle;
}

BinaryMask BinaryMask::from_rle(int width, int height, int origin_x, int origin_y,
                                const std::vector<std::int64_t>& rle) {
  if (rle.size() % 2 != 0) {
    throw Error(ErrorCode::DataError, "run-length encoding must have an even number of entries");
  }
  BinaryMask m(width, height, origin_x, origin_y);
  const auto n = static_cast<std::int64_t>(m.bits_.size());
  for (std::size_t k = 0; k < rle.size(); k += 2) {
    const std::int64_t start = rle[k];
    const std::int64_t len = rle[k + 1];
    if (start < 0 || len < 0 || start + len > n) {
      throw Error(ErrorCode::DataError, "run-length segment outside the mask grid");
    }
    std::fill(m.bits_.begin() + start, m.bits_.begin() + start + len, std::uint8_t{1});
  }
  return m;
}

BinaryMask BinaryMask::dilated(int radius) const {
  BinaryMask out(width_ + 2 * radius, height_ + 2 * radius, origin_x_ - radius, origin_y_ - radius);
  for (int row = 0; row < height_; ++row) {
    for (int col = 0; col < width_; ++col) {
      if (!at(col, row)) continue;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) out.set(col + dc + radius, row + dr + radius);
      }
    }
  }
  return out;
}

BinaryMask BinaryMask::translated(int du, int dv) const {
  BinaryMask out = *this;
  out.origin_x_ += du;
  out.origin_y_ += dv;
  return out;
}

namespace {

struct Candidate {
  double best = 0.0;
  bool found = false;
  PixelPoint point;

  // Scan order is row-major, so strict comparison keeps the smallest row/col on ties.
  void offer(double value, bool minimize, int u, int v) {
    if (!found || (minimize ? value < best : value > best)) {
      best = value;
      found = true;
      point = {static_cast<double>(u), static_cast<double>(v)};
    }
  }
};

}  // namespace

ExtremePointSet mask_pca(const BinaryMask& mask) {
  const std::size_t n = mask.count();
  if (n < 3) {
    throw Error(ErrorCode::DegenerateMask, "mask has " + std::to_string(n) + " foreground pixels, need at least 3");
  }

  double su = 0.0, sv = 0.0;
  for (int row = 0; row < mask.height(); ++row) {
    for (int col = 0; col < mask.width(); ++col) {
      if (!mask.at(col, row)) continue;
      su += mask.origin_x() + col;
      sv += mask.origin_y() + row;
    }
  }
  const double mu = su / static_cast<double>(n);
  const double mv = sv / static_cast<double>(n);

  double cuu = 0.0, cuv = 0.0, cvv = 0.0;
  for (int row = 0; row < mask.height(); ++row) {
    for (int col = 0; col < mask.width(); ++col) {
      if (!mask.at(col, row)) continue;
      const double du = mask.origin_x() + col - mu;
      const double dv = mask.origin_y() + row - mv;
      cuu += du * du;
      cuv += du * dv;
      cvv += dv * dv;
    }
  }
  cuu /= static_cast<double>(n);
  cuv /= static_cast<double>(n);
  cvv /= static_cast<double>(n);

  const double mean = 0.5 * (cuu + cvv);
  const double radius = std::hypot(0.5 * (cuu - cvv), cuv);
  const double l_major = mean + radius;
  const double l_minor = std::max(0.0, mean - radius);

  Eigen::Vector2d major;
  if (cuv != 0.0) {
    major = Eigen::Vector2d(l_major - cvv, cuv).normalized();
  } else {
    major = cuu >= cvv ? Eigen::Vector2d::UnitX() : Eigen::Vector2d::UnitY();
  }
  if (major.x() < 0.0 || (major.x() == 0.0 && major.y() < 0.0)) major = -major;
  const Eigen::Vector2d minor(-major.y(), major.x());

  ExtremePointSet out;
  out.barycenter = {mu, mv};
  out.major_axis = major;
  out.minor_axis = minor;
  out.major_eigenvalue = l_major;
  out.minor_eigenvalue = l_minor;

  Candidate maj_lo, maj_hi, min_lo, min_hi;
  for (int row = 0; row < mask.height(); ++row) {
    for (int col = 0; col < mask.width(); ++col) {
      if (!mask.at(col, row)) continue;
      const int u = mask.origin_x() + col;
      const int v = mask.origin_y() + row;
      const Eigen::Vector2d d(u - mu, v - mv);
      const double pm = major.dot(d);
      const double pn = minor.dot(d);
      maj_lo.offer(pm, true, u, v);
      maj_hi.offer(pm, false, u, v);
      min_lo.offer(pn, true, u, v);
      min_hi.offer(pn, false, u, v);
    }
  }
  out.major_neg = maj_lo.point;
  out.major_pos = maj_hi.point;
  if (l_minor >= 1e-12) {
    out.minor_neg = min_lo.point;
    out.minor_pos = min_hi.point;
  }
  return out;
}

namespace {

std::optional<PixelPoint> extremal_in_band(const BinaryMask& to, const ExtremePointSet& axes, double v_center,
                                           double band, const Eigen::Vector2d& axis, bool minimize) {
  const int row_lo = std::max(0, static_cast<int>(std::ceil(v_center - band)) - to.origin_y());
  const int row_hi = std::min(to.height() - 1, static_cast<int>(std::floor(v_center + band)) - to.origin_y());
  Candidate c;
  for (int row = row_lo; row <= row_hi; ++row) {
    for (int col = 0; col < to.width(); ++col) {
      if (!to.at(col, row)) continue;
      const int u = to.origin_x() + col;
      const int v = to.origin_y() + row;
      c.offer(axis.dot(Eigen::Vector2d(u - axes.barycenter.u, v - axes.barycenter.v)), minimize, u, v);
    }
  }
  if (!c.found) return std::nullopt;
  return c.point;
}

}  // namespace

ExtremeCorrespondences correspond_extremes(const ExtremePointSet& from, const BinaryMask& to,
                                           const ExtremePointSet& to_axes, double band) {
  ExtremeCorrespondences out;
  out.major_neg = extremal_in_band(to, to_axes, from.major_neg.v, band, to_axes.major_axis, true);
  out.major_pos = extremal_in_band(to, to_axes, from.major_pos.v, band, to_axes.major_axis, false);
  if (from.minor_neg && !to_axes.collinear()) {
    out.minor_neg = extremal_in_band(to, to_axes, from.minor_neg->v, band, to_axes.minor_axis, true);
  }
  if (from.minor_pos && !to_axes.collinear()) {
    out.minor_pos = extremal_in_band(to, to_axes, from.minor_pos->v, band, to_axes.minor_axis, false);
  }
  return out;
}

ExtremeCorrespondences correspond_extremes(const ExtremePointSet& from, const BinaryMask& to, double band) {
  return correspond_extremes(from, to, mask_pca(to), band);
}

namespace {

double distance(const WorldPoint& a, const WorldPoint& b) { return (a.vec() - b.vec()).norm(); }

// Triangulate a left/right pixel pair in the rectified rig.
WorldPoint locate(const PixelPoint& left, const PixelPoint& right, const RectifiedStereo& stereo) {
  return triangulate(left, right, stereo.left, stereo.right);
}

std::optional<double> segment_length(const std::optional<PixelPoint>& a_left, const std::optional<PixelPoint>& a_right,
                                     const std::optional<PixelPoint>& b_left, const std::optional<PixelPoint>& b_right,
                                     const RectifiedStereo& stereo) {
  if (!a_left || !a_right || !b_left || !b_right) return std::nullopt;
  return distance(locate(*a_left, *a_right, stereo), locate(*b_left, *b_right, stereo));
}

std::optional<double> mean_or_single(const std::optional<double>& a, const std::optional<double>& b, bool& single) {
  single = false;
  if (a && b) return 0.5 * (*a + *b);
  single = a.has_value() || b.has_value();
  if (a) return a;
  return b;
}

}  // namespace

FishMeasurement measure_pair(const BinaryMask& left, const BinaryMask& right, const RectifiedStereo& stereo,
                             double band) {
  const ExtremePointSet pl = mask_pca(left);
  const ExtremePointSet pr = mask_pca(right);

  const ExtremeCorrespondences lr = correspond_extremes(pl, right, pr, band);
  const ExtremeCorrespondences rl = correspond_extremes(pr, left, pl, band);

  FishMeasurement out;
  out.flags.collinear_mask = pl.collinear() || pr.collinear();

  // left-to-right: left extremes with their right correspondents
  out.left_to_right.length_m = segment_length(pl.major_neg, lr.major_neg, pl.major_pos, lr.major_pos, stereo);
  out.left_to_right.height_m = segment_length(pl.minor_neg, lr.minor_neg, pl.minor_pos, lr.minor_pos, stereo);
  // right-to-left: left correspondents with right extremes
  out.right_to_left.length_m = segment_length(rl.major_neg, pr.major_neg, rl.major_pos, pr.major_pos, stereo);
  out.right_to_left.height_m = segment_length(rl.minor_neg, pr.minor_neg, rl.minor_pos, pr.minor_pos, stereo);

  const auto length =
      mean_or_single(out.left_to_right.length_m, out.right_to_left.length_m, out.flags.single_direction_length);
  if (!length) {
    throw Error(ErrorCode::UnmeasurableFish, "no direction has both major-axis correspondences");
  }
  out.fork_length_m = *length;

  const auto height =
      mean_or_single(out.left_to_right.height_m, out.right_to_left.height_m, out.flags.single_direction_height);
  out.flags.no_height = !height.has_value();
  out.height_m = height.value_or(std::numeric_limits<double>::quiet_NaN());

  // B_LR = {B_L, (B_R.u, B_L.v)}, B_RL = {(B_L.u, B_R.v), B_R}
  const WorldPoint c_lr = locate(pl.barycenter, {pr.barycenter.u, pl.barycenter.v}, stereo);
  const WorldPoint c_rl = locate({pl.barycenter.u, pr.barycenter.v}, pr.barycenter, stereo);
  out.centroid = WorldPoint::from(0.5 * (c_lr.vec() + c_rl.vec()));
  if (!(out.centroid.z > 0.0)) {
    throw Error(ErrorCode::UnmeasurableFish, "triangulated centroid is not in front of the rig");
  }
  return out;
}

}  // namespace stereofish
