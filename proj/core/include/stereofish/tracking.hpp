#pragma once

// Per-camera multi-object tracker: Kalman motion model, Mahalanobis gating,
// appearance gallery with cosine distance, recency-ordered matching cascade,
// IoU matching for young tracks, and a tentative -> confirmed lifecycle.

#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "stereofish/assignment.hpp"
#include "stereofish/detection.hpp"
#include "stereofish/kalman.hpp"

namespace stereofish {

/// Intersection over union of two boxes, in [0, 1].
double iou(const BoundingBox& a, const BoundingBox& b);

enum class TrackStage { Tentative, Confirmed, Deleted };

std::string_view to_string(TrackStage stage);
TrackStage track_stage_from_string(std::string_view name);

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom.
inline constexpr double kChiSquare95Dof4 = 9.4877;

struct TrackerConfig {
  double iou_confirm_threshold = 0.3;
  int confirm_frames = 3;
  double mahalanobis_gate = kChiSquare95Dof4;
  double lambda = 0.0;  // weight of the motion term in the combined cost
  int max_age = 30;
  double appearance_gate = 0.4;  // max cosine distance
  std::size_t gallery_size = 100;
  KalmanNoise noise;

  void validate() const;
};

struct TrackObservation {
  int frame = 0;
  int det_id = 0;
  BoundingBox box;
  std::vector<ClassScore> top5;
};

struct TrackHypothesis {
  int track_id = 0;
  KalmanState state;
  TrackStage stage = TrackStage::Tentative;
  int hits = 0;
  int consecutive_iou_hits = 0;  // IoU-consistent matches since spawn
  int time_since_update = 0;
  std::optional<int> confirmed_frame;
  std::deque<std::vector<float>> gallery;  // oldest first
  std::vector<TrackObservation> history;

  BoundingBox predicted_box() const { return to_box(state.mean.head<4>()); }
};

/// Cost matrix over (tracks x detections): lambda * d_mahalanobis^2 +
/// (1 - lambda) * min gallery cosine distance. Cells outside either gate are forbidden.
WeightMatrix gating_and_costs(std::span<const TrackHypothesis> tracks, std::span<const int> track_indices,
                              std::span<const DetectionRecord> detections, std::span<const int> detection_indices,
                              const TrackerConfig& config);
WeightMatrix gating_and_costs(std::span<const TrackHypothesis> tracks, std::span<const DetectionRecord> detections,
                              const TrackerConfig& config);

/// Smallest cosine distance between a feature and a gallery (1.0 for an
/// empty gallery, +inf for a zero feature).
double appearance_distance(const std::deque<std::vector<float>>& gallery, std::span<const float> feature);

struct AssociationResult {
  std::vector<std::pair<int, int>> matches;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

/// Confirmed tracks are matched level by level in order of time_since_update
/// (most recently updated first); tentative tracks, and confirmed tracks
/// updated on the previous frame that the cascade left unmatched, are then
/// matched on IoU against the remaining detections.
/// Tracks must already be predicted to the current frame.
AssociationResult matching_cascade(std::span<const TrackHypothesis> tracks, std::span<const DetectionRecord> detections,
                                   const TrackerConfig& config);

struct TrackFrameRecord {
  int frame = 0;
  int track_id = 0;
  std::optional<int> det_id;  // detection associated on this frame
  TrackStage stage = TrackStage::Tentative;
  BoundingBox box;  // filtered state
  std::vector<ClassScore> top5;
  int time_since_update = 0;
};

/// Sequential state machine; one instance per camera.
class Tracker {
 public:
  explicit Tracker(TrackerConfig config = {});

  /// Processes one frame. Frames must strictly increase (OutOfOrderFrame otherwise).
  /// Emits a record for every live track that is confirmed or was updated this frame.
  std::vector<TrackFrameRecord> step(int frame, std::span<const DetectionRecord> detections);

  const std::vector<TrackHypothesis>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return config_; }
  int next_track_id() const { return next_id_; }

 private:
  void spawn(const DetectionRecord& det, int frame);

  TrackerConfig config_;
  std::vector<TrackHypothesis> tracks_;
  std::optional<int> last_frame_;
  int next_id_ = 1;
};

}  // namespace stereofish
