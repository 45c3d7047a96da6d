#pragma once

// Left/right detection pairing on one synchronized frame: rectified-row gate
// plus appearance similarity, solved as a maximum-weight assignment.

#include <span>
#include <vector>

#include "stereofish/assignment.hpp"
#include "stereofish/calibration.hpp"
#include "stereofish/detection.hpp"

namespace stereofish {

/// a.b / (|a||b|). Throws ZeroVector or DimensionMismatch.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct PairedDetection {
  int frame = 0;
  int left_id = 0;
  int right_id = 0;
  double similarity = 0.0;
  friend bool operator==(const PairedDetection&, const PairedDetection&) = default;
};

struct PairingOptions {
  double epipolar_delta = 5.0;  // px, inclusive
  bool require_nonnegative_disparity = true;
};

struct FramePairing {
  std::vector<PairedDetection> pairs;  // sorted by left_id
  std::vector<int> unpaired_left;      // sorted ids
  std::vector<int> unpaired_right;
  std::vector<int> zero_feature_left;  // subset of unpaired_*, flagged
  std::vector<int> zero_feature_right;
};

/// Rectified box centres of a detection list.
std::vector<PixelPoint> rectified_centers(std::span<const DetectionRecord> detections, const RectifiedStereo& stereo,
                                          Side side);

/// Weight matrix (rows = left, cols = right) with gate-failing cells and
/// zero-feature detections forbidden.
WeightMatrix build_pairing_matrix(std::span<const DetectionRecord> lefts, std::span<const DetectionRecord> rights,
                                  std::span<const PixelPoint> left_centers, std::span<const PixelPoint> right_centers,
                                  const PairingOptions& options = {});

FramePairing pair_frame(std::span<const DetectionRecord> lefts, std::span<const DetectionRecord> rights,
                        const RectifiedStereo& stereo, const PairingOptions& options = {});

}  // namespace stereofish
