#pragma once

// Records handed over by the upstream detector / classifier.

#include <vector>

namespace stereofish {

struct BoundingBox {
  double x = 0.0;  // top-left, px
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_u() const { return x + 0.5 * w; }
  double center_v() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  double aspect_ratio() const { return w / h; }

  void validate() const;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ClassScore {
  int class_id = 0;
  double score = 0.0;
  friend bool operator==(const ClassScore&, const ClassScore&) = default;
};

struct DetectionRecord {
  int frame = 0;
  int id = 0;  // unique within (frame, camera)
  BoundingBox box;
  double confidence = 1.0;
  std::vector<float> feature;
  std::vector<ClassScore> top5;  // non-increasing scores, at most 5

  /// Checks box, confidence range and top-5 ordering. Feature norm is not
  /// checked here; zero features are handled by the consumers.
  void validate() const;
};

inline constexpr int kDefaultFeatureDimension = 2316;

}  // namespace stereofish
