#pragma once

// Mask-based stereo measurement: principal axes of each mask, extreme points,
// cross-mask correspondences inside a rectified row band, triangulated fork
// length, height, and centroid.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "stereofish/calibration.hpp"
#include "stereofish/geometry.hpp"

namespace stereofish {

/// Row-major boolean grid placed at an integer origin in full rectified image
/// coordinates. Pixel (col, row) has image coordinates (origin_x + col, origin_y + row).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, int origin_x = 0, int origin_y = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int origin_x() const { return origin_x_; }
  int origin_y() const { return origin_y_; }

  bool at(int col, int row) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int col, int row, bool value = true) { bits_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0; }

  /// Foreground test in image coordinates; false outside the grid.
  bool contains_image_pixel(int u, int v) const;

  std::size_t count() const;

  /// Run-length encoding: flat row-major (start, length) pairs of foreground runs.
  std::vector<std::int64_t> to_rle() const;
  static BinaryMask from_rle(int width, int height, int origin_x, int origin_y, const std::vector<std::int64_t>& rle);

  /// 8-neighbour dilation by `radius` pixels; the grid grows to keep every pixel.
  BinaryMask dilated(int radius = 1) const;

  /// Same pixels shifted by an integer offset.
  BinaryMask translated(int du, int dv) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int origin_x_ = 0;
  int origin_y_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct ExtremePointSet {
  PixelPoint major_neg;  // snout / tail ends
  PixelPoint major_pos;
  std::optional<PixelPoint> minor_neg;  // absent for collinear masks
  std::optional<PixelPoint> minor_pos;
  PixelPoint barycenter;
  Eigen::Vector2d major_axis = Eigen::Vector2d::UnitX();
  Eigen::Vector2d minor_axis = Eigen::Vector2d::UnitY();
  double major_eigenvalue = 0.0;
  double minor_eigenvalue = 0.0;

  bool collinear() const { return !minor_neg.has_value(); }
};

/// PCA of the foreground pixel coordinates. The major axis is oriented with a
/// positive u component (positive v when vertical) and the minor axis is the
/// major axis rotated by +90 degrees. Ties between extreme candidates go to the
/// smallest row, then the smallest column.
/// Throws DegenerateMask for fewer than 3 foreground pixels.
ExtremePointSet mask_pca(const BinaryMask& mask);

struct ExtremeCorrespondences {
  std::optional<PixelPoint> major_neg;
  std::optional<PixelPoint> major_pos;
  std::optional<PixelPoint> minor_neg;
  std::optional<PixelPoint> minor_pos;
};

/// For each extreme of `from`, the foreground pixel of `to` inside the row band
/// |v - p.v| <= band that is extremal in the same sense along `to`'s own axes.
/// A missing optional is an EmptyBand for that point.
ExtremeCorrespondences correspond_extremes(const ExtremePointSet& from, const BinaryMask& to,
                                           const ExtremePointSet& to_axes, double band = 3.0);
ExtremeCorrespondences correspond_extremes(const ExtremePointSet& from, const BinaryMask& to, double band = 3.0);

struct DirectionalMeasurement {
  std::optional<double> length_m;
  std::optional<double> height_m;
};

struct MeasurementFlags {
  bool single_direction_length = false;
  bool single_direction_height = false;
  bool no_height = false;
  bool collinear_mask = false;
};

struct FishMeasurement {
  double fork_length_m = 0.0;
  double height_m = 0.0;  // NaN when flags.no_height
  WorldPoint centroid;    // rectified left-camera frame
  DirectionalMeasurement left_to_right;
  DirectionalMeasurement right_to_left;
  MeasurementFlags flags;
};

/// Both masks in rectified image coordinates. Throws UnmeasurableFish when
/// neither direction yields both major-axis correspondences, or when the
/// triangulated centroid is not in front of the rig.
FishMeasurement measure_pair(const BinaryMask& left, const BinaryMask& right, const RectifiedStereo& stereo,
                             double band = 3.0);

}  // namespace stereofish
