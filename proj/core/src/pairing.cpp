#include "stereofish/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stereofish/error.hpp"

namespace stereofish {

void BoundingBox::validate() const {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
    throw Error(ErrorCode::DataError, "bounding box has non-finite coordinates");
  }
  if (w <= 0.0 || h <= 0.0) {
    throw Error(ErrorCode::DataError, "bounding box must have positive size");
  }
}

void DetectionRecord::validate() const {
  box.validate();
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw Error(ErrorCode::DataError, "detection " + std::to_string(id) + " confidence outside [0, 1]");
  }
  if (top5.size() > 5) {
    throw Error(ErrorCode::DataError, "detection " + std::to_string(id) + " has more than 5 class scores");
  }
  for (std::size_t i = 1; i < top5.size(); ++i) {
    if (top5[i].score > top5[i - 1].score) {
      throw Error(ErrorCode::DataError, "detection " + std::to_string(id) + " top-5 scores are not non-increasing");
    }
  }
}

namespace {

double squared_norm(std::span<const float> a) {
  double s = 0.0;
  for (float v : a) s += static_cast<double>(v) * v;
  return s;
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature dimensions differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<PixelPoint> rectified_centers(std::span<const DetectionRecord> detections, const RectifiedStereo& stereo,
                                          Side side) {
  std::vector<PixelPoint> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    out.push_back(stereo.rectify_raw({d.box.center_u(), d.box.center_v()}, side));
  }
  return out;
}

WeightMatrix build_pairing_matrix(std::span<const DetectionRecord> lefts, std::span<const DetectionRecord> rights,
                                  std::span<const PixelPoint> left_centers, std::span<const PixelPoint> right_centers,
                                  const PairingOptions& options) {
  WeightMatrix m(lefts.size(), rights.size());
  for (std::size_t i = 0; i < lefts.size(); ++i) {
    const bool left_ok = squared_norm(lefts[i].feature) > 0.0;
    for (std::size_t j = 0; j < rights.size(); ++j) {
      const bool right_ok = squared_norm(rights[j].feature) > 0.0;
      const bool gated = epipolar_gate(left_centers[i], right_centers[j], options.epipolar_delta);
      const bool disparity_ok = !options.require_nonnegative_disparity || left_centers[i].u >= right_centers[j].u;
      if (!left_ok || !right_ok || !gated || !disparity_ok) {
        m.forbid(i, j);
        continue;
      }
      m.set(i, j, cosine_similarity(lefts[i].feature, rights[j].feature));
    }
  }
  return m;
}

FramePairing pair_frame(std::span<const DetectionRecord> lefts, std::span<const DetectionRecord> rights,
                        const RectifiedStereo& stereo, const PairingOptions& options) {
  const std::vector<PixelPoint> lc = rectified_centers(lefts, stereo, Side::Left);
  const std::vector<PixelPoint> rc = rectified_centers(rights, stereo, Side::Right);
  const WeightMatrix m = build_pairing_matrix(lefts, rights, lc, rc, options);
  const Matching matching = solve_max_weight(m);

  FramePairing out;
  std::vector<char> left_used(lefts.size(), 0), right_used(rights.size(), 0);
  for (const auto& [r, c] : matching.pairs) {
    left_used[r] = 1;
    right_used[c] = 1;
    const int frame = lefts[r].frame;
    out.pairs.push_back({frame, lefts[r].id, rights[c].id, m.weight(r, c)});
  }
  for (std::size_t i = 0; i < lefts.size(); ++i) {
    if (left_used[i]) continue;
    out.unpaired_left.push_back(lefts[i].id);
    if (squared_norm(lefts[i].feature) == 0.0) out.zero_feature_left.push_back(lefts[i].id);
  }
  for (std::size_t j = 0; j < rights.size(); ++j) {
    if (right_used[j]) continue;
    out.unpaired_right.push_back(rights[j].id);
    if (squared_norm(rights[j].feature) == 0.0) out.zero_feature_right.push_back(rights[j].id);
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const PairedDetection& a, const PairedDetection& b) { return a.left_id < b.left_id; });
  std::sort(out.unpaired_left.begin(), out.unpaired_left.end());
  std::sort(out.unpaired_right.begin(), out.unpaired_right.end());
  std::sort(out.zero_feature_left.begin(), out.zero_feature_left.end());
  std::sort(out.zero_feature_right.begin(), out.zero_feature_right.end());
  return out;
}

}  // namespace stereofish
