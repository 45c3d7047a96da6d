#include "stereofish/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "stereofish/assignment.hpp"
#include "stereofish/error.hpp"

namespace stereofish {

std::optional<int> SpeciesBelief::argmax() const {
  std::optional<int> best;
  double best_score = 0.0;
  for (const auto& [cls, score] : scores) {  // ascending class id
    if (!best || score > best_score) {
      best = cls;
      best_score = score;
    }
  }
  return best;
}

double SpeciesBelief::score(int class_id) const {
  const auto it = scores.find(class_id);
  return it == scores.end() ? 0.0 : it->second;
}

SpeciesBelief accumulate_belief(std::span<const std::vector<ClassScore>> top5_history) {
  SpeciesBelief b;
  for (const auto& top5 : top5_history) {
    if (top5.empty()) continue;
    ++b.observations;
    for (const auto& cs : top5) b.scores[cs.class_id] += std::max(0.0, cs.score);
  }
  return b;
}

std::vector<TrackLog> collect_track_logs(std::span<const TrackFrameRecord> records) {
  std::map<int, TrackLog> logs;
  for (const auto& r : records) {
    TrackLog& log = logs[r.track_id];
    log.track_id = r.track_id;
    if (r.stage == TrackStage::Confirmed) log.confirmed = true;
    if (r.det_id) log.observations.push_back({r.frame, *r.det_id, r.box, r.top5});
  }
  std::vector<TrackLog> out;
  for (auto& [id, log] : logs) {
    std::stable_sort(log.observations.begin(), log.observations.end(),
                     [](const TrackObservation& a, const TrackObservation& b) { return a.frame < b.frame; });
    out.push_back(std::move(log));
  }
  return out;
}

namespace {

using DetKey = std::pair<int, int>;  // (frame, det id)

std::map<DetKey, int> index_detections(std::span<const TrackLog> logs) {
  std::map<DetKey, int> index;
  for (int i = 0; i < static_cast<int>(logs.size()); ++i) {
    for (const auto& o : logs[i].observations) index[{o.frame, o.det_id}] = i;
  }
  return index;
}

void extend_frames(StereoTrack& st, const TrackLog& log, std::vector<std::vector<ClassScore>>& history, bool& any) {
  for (const auto& o : log.observations) {
    if (!any) {
      st.first_frame = st.last_frame = o.frame;
      any = true;
    }
    st.first_frame = std::min(st.first_frame, o.frame);
    st.last_frame = std::max(st.last_frame, o.frame);
    history.push_back(o.top5);
  }
}

}  // namespace

std::vector<StereoTrack> associate_tracks(std::span<const TrackLog> left_tracks, std::span<const TrackLog> right_tracks,
                                          std::span<const PairedDetection> pairs,
                                          std::span<const FrameMeasurement> measurements) {
  std::vector<TrackLog> lefts, rights;
  for (const auto& t : left_tracks) {
    if (t.confirmed) lefts.push_back(t);
  }
  for (const auto& t : right_tracks) {
    if (t.confirmed) rights.push_back(t);
  }
  const auto left_index = index_detections(lefts);
  const auto right_index = index_detections(rights);

  const std::size_t nl = lefts.size();
  const std::size_t nr = rights.size();
  std::vector<int> counts(nl * nr, 0);
  for (const auto& p : pairs) {
    const auto li = left_index.find({p.frame, p.left_id});
    const auto ri = right_index.find({p.frame, p.right_id});
    if (li == left_index.end() || ri == right_index.end()) continue;
    ++counts[li->second * nr + ri->second];
  }

  // Extra zero-weight columns let every left track stay unassociated without
  // reducing cardinality, so the solver maximises co-pairings only.
  WeightMatrix m(nl, nr + nl);
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      if (counts[i * nr + j] > 0) {
        m.set(i, j, counts[i * nr + j]);
      } else {
        m.forbid(i, j);
      }
    }
    for (std::size_t k = 0; k < nl; ++k) {
      if (k == i) {
        m.set(i, nr + k, 0.0);
      } else {
        m.forbid(i, nr + k);
      }
    }
  }
  const Matching matching = solve_max_weight(m);

  std::vector<StereoTrack> out;
  std::vector<char> left_used(nl, 0), right_used(nr, 0);
  std::map<std::pair<int, int>, std::size_t> by_track_pair;
  for (const auto& [i, j] : matching.pairs) {
    if (j >= nr) continue;
    left_used[i] = 1;
    right_used[j] = 1;
    StereoTrack st;
    st.left_track_id = lefts[i].track_id;
    st.right_track_id = rights[j].track_id;
    st.co_pairing_count = counts[i * nr + j];
    by_track_pair[{static_cast<int>(i), static_cast<int>(j)}] = out.size();
    out.push_back(std::move(st));
  }
  for (std::size_t i = 0; i < nl; ++i) {
    if (left_used[i]) continue;
    StereoTrack st;
    st.left_track_id = lefts[i].track_id;
    out.push_back(std::move(st));
  }
  for (std::size_t j = 0; j < nr; ++j) {
    if (right_used[j]) continue;
    StereoTrack st;
    st.right_track_id = rights[j].track_id;
    out.push_back(std::move(st));
  }

  auto find_log = [](const std::vector<TrackLog>& logs, std::optional<int> id) -> const TrackLog* {
    if (!id) return nullptr;
    for (const auto& l : logs) {
      if (l.track_id == *id) return &l;
    }
    return nullptr;
  };
  for (auto& st : out) {
    std::vector<std::vector<ClassScore>> history;
    bool any = false;
    if (const TrackLog* l = find_log(lefts, st.left_track_id)) extend_frames(st, *l, history, any);
    if (const TrackLog* r = find_log(rights, st.right_track_id)) extend_frames(st, *r, history, any);
    st.belief = accumulate_belief(history);
  }

  for (const auto& fm : measurements) {
    const auto li = left_index.find({fm.frame, fm.left_id});
    const auto ri = right_index.find({fm.frame, fm.right_id});
    if (li == left_index.end() || ri == right_index.end()) continue;
    const auto it = by_track_pair.find({li->second, ri->second});
    if (it == by_track_pair.end()) continue;
    out[it->second].measurements.push_back(fm);
  }
  for (auto& st : out) {
    std::stable_sort(st.measurements.begin(), st.measurements.end(),
                     [](const FrameMeasurement& a, const FrameMeasurement& b) { return a.frame < b.frame; });
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::NoMeasurements, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

FusedFishRecord base_record(const StereoTrack& track) {
  FusedFishRecord r;
  r.left_track_id = track.left_track_id;
  r.right_track_id = track.right_track_id;
  r.species = track.belief.argmax();
  r.species_score = r.species ? track.belief.score(*r.species) : 0.0;
  r.n_obs = track.belief.observations;
  r.first_frame = track.first_frame;
  r.last_frame = track.last_frame;
  return r;
}

}  // namespace

FusedFishRecord finalize(const StereoTrack& track) {
  if (track.measurements.empty()) {
    throw Error(ErrorCode::NoMeasurements, "stereo track has no measurements");
  }
  FusedFishRecord r = base_record(track);
  std::vector<double> lengths, heights;
  for (const auto& m : track.measurements) {
    lengths.push_back(m.fork_length_m);
    if (std::isfinite(m.height_m)) heights.push_back(m.height_m);
    r.trajectory.emplace_back(m.frame, m.centroid);
  }
  r.fork_length_m = median(lengths);
  if (!heights.empty()) r.height_m = median(heights);
  return r;
}

std::vector<FusedFishRecord> fuse(std::span<const StereoTrack> tracks) {
  std::vector<FusedFishRecord> out;
  for (const auto& t : tracks) {
    out.push_back(t.measurements.empty() ? base_record(t) : finalize(t));
  }
  std::stable_sort(out.begin(), out.end(), [](const FusedFishRecord& a, const FusedFishRecord& b) {
    return std::make_tuple(a.first_frame, a.left_track_id.value_or(-1), a.right_track_id.value_or(-1)) <
           std::make_tuple(b.first_frame, b.left_track_id.value_or(-1), b.right_track_id.value_or(-1));
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].fish_id = static_cast<int>(i) + 1;
  return out;
}

}  // namespace stereofish
