#pragma once

// Cross-camera track fusion: left/right track association by co-pairing
// frequency, species belief accumulation, and median smoothing of the
// per-frame measurements.

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "stereofish/detection.hpp"
#include "stereofish/geometry.hpp"
#include "stereofish/pairing.hpp"
#include "stereofish/tracking.hpp"

namespace stereofish {

struct SpeciesBelief {
  std::map<int, double> scores;  // class id -> accumulated score
  int observations = 0;

  /// Highest accumulated class, lowest id on ties; nullopt when empty.
  std::optional<int> argmax() const;
  double score(int class_id) const;
};

/// Sums each class's score over every top-5 list in the history.
SpeciesBelief accumulate_belief(std::span<const std::vector<ClassScore>> top5_history);

/// Detections associated with one track, as read back from tracker output.
struct TrackLog {
  int track_id = 0;
  bool confirmed = false;  // reached the confirmed stage at some frame
  std::vector<TrackObservation> observations;  // frame order
};

/// Groups tracker records by track id, keeping only records with a detection.
std::vector<TrackLog> collect_track_logs(std::span<const TrackFrameRecord> records);

struct FrameMeasurement {
  int frame = 0;
  int left_id = 0;
  int right_id = 0;
  double fork_length_m = 0.0;
  double height_m = 0.0;  // may be NaN
  WorldPoint centroid;
};

struct StereoTrack {
  std::optional<int> left_track_id;
  std::optional<int> right_track_id;
  int co_pairing_count = 0;
  SpeciesBelief belief;
  std::vector<FrameMeasurement> measurements;  // frame order
  int first_frame = 0;
  int last_frame = 0;

  bool is_stereo() const { return left_track_id && right_track_id; }
};

/// Associates confirmed left and right tracks one-to-one, maximising the
/// total number of frames on which their detections were stereo-paired.
/// Pairs with no co-pairing are never associated; unassociated tracks are
/// returned as mono-camera entries. Belief and measurements are attached.
std::vector<StereoTrack> associate_tracks(std::span<const TrackLog> left_tracks, std::span<const TrackLog> right_tracks,
                                          std::span<const PairedDetection> pairs,
                                          std::span<const FrameMeasurement> measurements = {});

struct FusedFishRecord {
  int fish_id = 0;
  std::optional<int> left_track_id;
  std::optional<int> right_track_id;
  std::optional<int> species;
  double species_score = 0.0;
  int n_obs = 0;
  std::optional<double> fork_length_m;
  std::optional<double> height_m;
  int first_frame = 0;
  int last_frame = 0;
  std::vector<std::pair<int, WorldPoint>> trajectory;
};

/// Median with the mean-of-central-pair convention for even counts.
double median(std::vector<double> values);

/// Median length/height, belief argmax, centroid trajectory.
/// Throws NoMeasurements when the track has no measurement.
FusedFishRecord finalize(const StereoTrack& track);

/// finalize() for measured tracks; other tracks keep belief only.
/// Fish ids are assigned in order of (first_frame, left id, right id).
std::vector<FusedFishRecord> fuse(std::span<const StereoTrack> tracks);

}  // namespace stereofish
