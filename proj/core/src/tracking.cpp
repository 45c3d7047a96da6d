#include "stereofish/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stereofish/error.hpp"
#include "stereofish/pairing.hpp"

namespace stereofish {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::string_view to_string(TrackStage stage) {
  switch (stage) {
    case TrackStage::Tentative: return "tentative";
    case TrackStage::Confirmed: return "confirmed";
    case TrackStage::Deleted: return "deleted";
  }
  return "unknown";
}

TrackStage track_stage_from_string(std::string_view name) {
  if (name == "tentative") return TrackStage::Tentative;
  if (name == "confirmed") return TrackStage::Confirmed;
  if (name == "deleted") return TrackStage::Deleted;
  throw Error(ErrorCode::DataError, "unknown track stage '" + std::string(name) + "'");
}

void TrackerConfig::validate() const {
  if (!(iou_confirm_threshold >= 0.0 && iou_confirm_threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "iou_confirm_threshold must be in [0, 1]");
  }
  if (confirm_frames < 1) throw Error(ErrorCode::ConfigError, "confirm_frames must be positive");
  if (!(mahalanobis_gate > 0.0)) throw Error(ErrorCode::ConfigError, "mahalanobis_gate must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::ConfigError, "lambda must be in [0, 1]");
  if (max_age < 1) throw Error(ErrorCode::ConfigError, "max_age must be positive");
  if (!(appearance_gate >= 0.0 && appearance_gate <= 2.0)) {
    throw Error(ErrorCode::ConfigError, "appearance_gate must be in [0, 2]");
  }
  if (gallery_size < 1) throw Error(ErrorCode::ConfigError, "gallery_size must be positive");
}

namespace {

bool nonzero(std::span<const float> f) {
  return std::any_of(f.begin(), f.end(), [](float v) { return v != 0.0f; });
}

std::vector<int> iota(std::size_t n) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
  return v;
}

}  // namespace

double appearance_distance(const std::deque<std::vector<float>>& gallery, std::span<const float> feature) {
  if (!nonzero(feature)) return std::numeric_limits<double>::infinity();
  if (gallery.empty()) return 1.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& g : gallery) {
    best = std::min(best, 1.0 - cosine_similarity(g, feature));
  }
  return best;
}

WeightMatrix gating_and_costs(std::span<const TrackHypothesis> tracks, std::span<const int> track_indices,
                              std::span<const DetectionRecord> detections, std::span<const int> detection_indices,
                              const TrackerConfig& config) {
  WeightMatrix m(track_indices.size(), detection_indices.size());
  for (std::size_t i = 0; i < track_indices.size(); ++i) {
    const TrackHypothesis& t = tracks[track_indices[i]];
    for (std::size_t j = 0; j < detection_indices.size(); ++j) {
      const DetectionRecord& d = detections[detection_indices[j]];
      const double d2 = squared_mahalanobis(t.state, to_observation(d.box), config.noise);
      const double da = appearance_distance(t.gallery, d.feature);
      if (d2 > config.mahalanobis_gate || da > config.appearance_gate) {
        m.forbid(i, j);
        continue;
      }
      m.set(i, j, config.lambda * d2 + (1.0 - config.lambda) * da);
    }
  }
  return m;
}

WeightMatrix gating_and_costs(std::span<const TrackHypothesis> tracks, std::span<const DetectionRecord> detections,
                              const TrackerConfig& config) {
  const std::vector<int> ti = iota(tracks.size());
  const std::vector<int> di = iota(detections.size());
  return gating_and_costs(tracks, ti, detections, di, config);
}

AssociationResult matching_cascade(std::span<const TrackHypothesis> tracks, std::span<const DetectionRecord> detections,
                                   const TrackerConfig& config) {
  AssociationResult out;
  std::vector<int> remaining = iota(detections.size());
  std::vector<char> track_matched(tracks.size(), 0);

  for (int level = 0; level <= config.max_age && !remaining.empty(); ++level) {
    std::vector<int> level_tracks;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      if (tracks[i].stage == TrackStage::Confirmed && tracks[i].time_since_update == level + 1) {
        level_tracks.push_back(static_cast<int>(i));
      }
    }
    if (level_tracks.empty()) continue;
    const WeightMatrix cost = gating_and_costs(tracks, level_tracks, detections, remaining, config);
    const Matching matching = solve_min_cost(cost);
    std::vector<char> det_taken(remaining.size(), 0);
    for (const auto& [r, c] : matching.pairs) {
      out.matches.emplace_back(level_tracks[r], remaining[c]);
      track_matched[level_tracks[r]] = 1;
      det_taken[c] = 1;
    }
    std::vector<int> next;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      if (!det_taken[j]) next.push_back(remaining[j]);
    }
    remaining = std::move(next);
  }

  // IoU stage
  std::vector<int> iou_tracks;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (track_matched[i]) continue;
    const bool young = tracks[i].stage == TrackStage::Tentative;
    const bool just_missed = tracks[i].stage == TrackStage::Confirmed && tracks[i].time_since_update == 1;
    if (young || just_missed) iou_tracks.push_back(static_cast<int>(i));
  }
  if (!iou_tracks.empty() && !remaining.empty()) {
    WeightMatrix cost(iou_tracks.size(), remaining.size());
    for (std::size_t i = 0; i < iou_tracks.size(); ++i) {
      const BoundingBox predicted = tracks[iou_tracks[i]].predicted_box();
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        const double overlap = iou(predicted, detections[remaining[j]].box);
        if (overlap < config.iou_confirm_threshold) {
          cost.forbid(i, j);
        } else {
          cost.set(i, j, 1.0 - overlap);
        }
      }
    }
    const Matching matching = solve_min_cost(cost);
    std::vector<char> det_taken(remaining.size(), 0);
    for (const auto& [r, c] : matching.pairs) {
      out.matches.emplace_back(iou_tracks[r], remaining[c]);
      track_matched[iou_tracks[r]] = 1;
      det_taken[c] = 1;
    }
    std::vector<int> next;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      if (!det_taken[j]) next.push_back(remaining[j]);
    }
    remaining = std::move(next);
  }

  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (!track_matched[i]) out.unmatched_tracks.push_back(static_cast<int>(i));
  }
  out.unmatched_detections = std::move(remaining);
  std::sort(out.matches.begin(), out.matches.end());
  return out;
}

Tracker::Tracker(TrackerConfig config) : config_(std::move(config)) { config_.validate(); }

void Tracker::spawn(const DetectionRecord& det, int frame) {
  TrackHypothesis t;
  t.track_id = next_id_++;
  t.state = kalman_initiate(to_observation(det.box), config_.noise);
  t.stage = TrackStage::Tentative;
  t.hits = 1;
  t.time_since_update = 0;
  if (nonzero(det.feature)) t.gallery.push_back(det.feature);
  t.history.push_back({frame, det.id, det.box, det.top5});
  tracks_.push_back(std::move(t));
}

std::vector<TrackFrameRecord> Tracker::step(int frame, std::span<const DetectionRecord> detections) {
  if (last_frame_ && frame <= *last_frame_) {
    throw Error(ErrorCode::OutOfOrderFrame,
                "frame " + std::to_string(frame) + " after frame " + std::to_string(*last_frame_));
  }
  const int dt = last_frame_ ? frame - *last_frame_ : 1;
  last_frame_ = frame;
  for (const auto& d : detections) d.validate();

  for (auto& t : tracks_) {
    t.state = kalman_predict(t.state, dt, config_.noise);
    t.time_since_update += dt;
  }

  const AssociationResult assoc = matching_cascade(tracks_, detections, config_);
  std::vector<std::optional<int>> matched_det(tracks_.size());

  for (const auto& [ti, di] : assoc.matches) {
    TrackHypothesis& t = tracks_[ti];
    const DetectionRecord& d = detections[di];
    t.state = kalman_update(t.state, to_observation(d.box), config_.noise);
    if (nonzero(d.feature)) {
      t.gallery.push_back(d.feature);
      while (t.gallery.size() > config_.gallery_size) t.gallery.pop_front();
    }
    ++t.hits;
    t.time_since_update = 0;
    t.history.push_back({frame, d.id, d.box, d.top5});
    if (t.stage == TrackStage::Tentative) {
      ++t.consecutive_iou_hits;
      if (t.consecutive_iou_hits >= config_.confirm_frames) {
        t.stage = TrackStage::Confirmed;
        t.confirmed_frame = frame;
      }
    }
    matched_det[ti] = d.id;
  }

  for (int ti : assoc.unmatched_tracks) {
    TrackHypothesis& t = tracks_[ti];
    if (t.stage == TrackStage::Tentative || t.time_since_update > config_.max_age) t.stage = TrackStage::Deleted;
  }

  std::vector<TrackFrameRecord> records;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const TrackHypothesis& t = tracks_[i];
    if (t.stage == TrackStage::Deleted) continue;
    if (t.stage != TrackStage::Confirmed && !matched_det[i]) continue;
    records.push_back({frame, t.track_id, matched_det[i], t.stage, t.predicted_box(),
                       matched_det[i] ? t.history.back().top5 : std::vector<ClassScore>{}, t.time_since_update});
  }

  std::erase_if(tracks_, [](const TrackHypothesis& t) { return t.stage == TrackStage::Deleted; });

  for (int di : assoc.unmatched_detections) {
    spawn(detections[di], frame);
    const TrackHypothesis& t = tracks_.back();
    records.push_back({frame, t.track_id, detections[di].id, t.stage, t.predicted_box(), detections[di].top5, 0});
  }
  return records;
}

}  // namespace stereofish
