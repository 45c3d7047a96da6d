#include "stereofish/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include "stereofish/error.hpp"

namespace stereofish {

Json PipelineReport::to_json() const {
  Json list = Json::array();
  for (const auto& s : stages) {
    list.push_back({{"stage", s.stage}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"skipped", s.skipped}});
  }
  return {{"stages", list}};
}

void rethrow_in_stage(const std::string& stage, const Error& e) {
  std::string what = e.what();
  const std::string prefix = std::string(to_string(e.code())) + ": ";
  if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
  throw Error(e.code(), "stage '" + stage + "': " + what);
}

namespace {

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    rethrow_in_stage(stage, e);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::DataError, "stage '" + stage + "': " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::DataError, "stage '" + stage + "': " + e.what());
  }
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::ConfigError, what + " not found: " + p.string());
}

}  // namespace

// --- in-memory stages -------------------------------------------------------

FramePairings pair_detections(std::span<const DetectionRecord> lefts, std::span<const DetectionRecord> rights,
                              const RectifiedStereo& stereo, const PairingOptions& options) {
  std::map<int, std::pair<std::vector<DetectionRecord>, std::vector<DetectionRecord>>> frames;
  for (const auto& d : lefts) frames[d.frame].first.push_back(d);
  for (const auto& d : rights) frames[d.frame].second.push_back(d);
  FramePairings out;
  for (auto& [frame, lr] : frames) {
    FramePairing fp = pair_frame(lr.first, lr.second, stereo, options);
    for (auto& p : fp.pairs) p.frame = frame;
    out.emplace_back(frame, std::move(fp));
  }
  return out;
}

MaskIndex index_masks(std::span<const MaskRecord> masks) {
  MaskIndex index;
  for (const auto& m : masks) index[{m.frame, m.id}] = m.mask;
  return index;
}

std::vector<MeasurementRow> measure_pairs(std::span<const PairedDetection> pairs, const MaskIndex& left_masks,
                                          const MaskIndex& right_masks, const RectifiedStereo& stereo, double band,
                                          std::size_t* skipped) {
  std::vector<MeasurementRow> out;
  std::size_t n_skipped = 0;
  for (const auto& p : pairs) {
    const auto l = left_masks.find({p.frame, p.left_id});
    const auto r = right_masks.find({p.frame, p.right_id});
    if (l == left_masks.end() || r == right_masks.end()) {
      throw Error(ErrorCode::DataError, "frame " + std::to_string(p.frame) + ": no mask for " +
                                            (l == left_masks.end() ? "left id " + std::to_string(p.left_id)
                                                                   : "right id " + std::to_string(p.right_id)));
    }
    try {
      const FishMeasurement m = measure_pair(l->second, r->second, stereo, band);
      MeasurementRow row;
      row.measurement = {p.frame, p.left_id, p.right_id, m.fork_length_m, m.height_m, m.centroid};
      row.flags = m.flags;
      out.push_back(row);
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Numeric) throw;
      ++n_skipped;
    }
  }
  if (skipped) *skipped = n_skipped;
  return out;
}

std::vector<TrackFrameRecord> track_detections(std::span<const DetectionRecord> detections,
                                               const TrackerConfig& config,
                                               std::optional<std::pair<int, int>> frame_range) {
  std::map<int, std::vector<DetectionRecord>> frames;
  for (const auto& d : detections) frames[d.frame].push_back(d);
  if (!frame_range) {
    if (frames.empty()) return {};
    frame_range = std::make_pair(frames.begin()->first, frames.rbegin()->first);
  }
  Tracker tracker(config);
  std::vector<TrackFrameRecord> out;
  static const std::vector<DetectionRecord> kNone;
  for (int f = frame_range->first; f <= frame_range->second; ++f) {
    const auto it = frames.find(f);
    const auto records = tracker.step(f, it == frames.end() ? kNone : it->second);
    out.insert(out.end(), records.begin(), records.end());
  }
  return out;
}

std::vector<FusedFishRecord> fuse_records(std::span<const TrackFrameRecord> left_tracks,
                                          std::span<const TrackFrameRecord> right_tracks,
                                          std::span<const PairedDetection> pairs,
                                          std::span<const MeasurementRow> measurements) {
  const auto left_logs = collect_track_logs(left_tracks);
  const auto right_logs = collect_track_logs(right_tracks);
  std::vector<FrameMeasurement> fm;
  for (const auto& row : measurements) fm.push_back(row.measurement);
  const auto stereo_tracks = associate_tracks(left_logs, right_logs, pairs, fm);
  return fuse(stereo_tracks);
}

// --- file stages ------------------------------------------------------------

CalibrationResult calibrate_files(const fs::path& corners, const fs::path& out_rig) {
  require_file(corners, "corner file");
  const auto views = in_stage("calibrate", [&] { return corners_from_json(read_json_file(corners)); });
  const CalibrationResult result = in_stage("calibrate", [&] { return calibrate_stereo(views); });
  write_text_file(out_rig, rig_to_json(result.rig, result.rms_reprojection_error).dump(2) + "\n");
  return result;
}

StageReport rectify_files(const fs::path& rig, const fs::path& out, const std::optional<fs::path>& detections,
                          Side side, const std::optional<fs::path>& centers_out, const Provenance& prov) {
  StageReport report{"rectify"};
  const RectifiedStereo stereo = in_stage("rectify", [&] { return make_rectified(load_rig(rig)); });
  write_text_file(out, rectification_to_json(stereo).dump(2) + "\n");
  if (detections) {
    if (!centers_out) throw Error(ErrorCode::ConfigError, "rectified centres need an output path");
    const auto dets = in_stage("rectify", [&] { return read_detections(*detections); });
    const auto centers = in_stage("rectify", [&] { return rectified_centers(dets, stereo, side); });
    std::string text = provenance_json(prov).dump() + "\n";
    for (std::size_t i = 0; i < dets.size(); ++i) {
      text += Json{{"frame", dets[i].frame}, {"id", dets[i].id}, {"u", centers[i].u}, {"v", centers[i].v}}.dump() + "\n";
    }
    write_text_file(*centers_out, text);
    report.inputs = dets.size();
    report.outputs = centers.size();
  }
  return report;
}

StageReport pair_files(const fs::path& rig, const fs::path& left, const fs::path& right, const fs::path& out,
                       const PairingOptions& options, const Provenance& prov,
                       const std::optional<fs::path>& left_features, const std::optional<fs::path>& right_features) {
  StageReport report{"pair"};
  const RectifiedStereo stereo = make_rectified(load_rig(rig));
  require_file(left, "left detections");
  require_file(right, "right detections");
  const auto lefts = in_stage("pair", [&] { return read_detections(left, left_features); });
  const auto rights = in_stage("pair", [&] { return read_detections(right, right_features); });
  const auto frames = in_stage("pair", [&] { return pair_detections(lefts, rights, stereo, options); });
  write_pairs(out, frames, prov);
  report.inputs = lefts.size() + rights.size();
  for (const auto& [f, fp] : frames) report.outputs += fp.pairs.size();
  return report;
}

StageReport measure_files(const fs::path& rig, const fs::path& pairs, const fs::path& left_masks,
                          const fs::path& right_masks, const fs::path& out, double band, const Provenance& prov) {
  StageReport report{"measure"};
  const RectifiedStereo stereo = make_rectified(load_rig(rig));
  require_file(pairs, "pair file");
  require_file(left_masks, "left mask index");
  require_file(right_masks, "right mask index");
  const auto paired = in_stage("measure", [&] { return read_pairs(pairs); });
  const MaskIndex lm = in_stage("measure", [&] { return index_masks(read_masks(left_masks)); });
  const MaskIndex rm = in_stage("measure", [&] { return index_masks(read_masks(right_masks)); });
  std::size_t skipped = 0;
  const auto rows = in_stage("measure", [&] { return measure_pairs(paired, lm, rm, stereo, band, &skipped); });
  write_measurements(out, rows, prov);
  report.inputs = paired.size();
  report.outputs = rows.size();
  report.skipped = skipped;
  return report;
}

StageReport track_files(const fs::path& detections, const TrackerConfig& config, const fs::path& out,
                        const Provenance& prov, const std::optional<fs::path>& features) {
  StageReport report{prov.stage.empty() ? "track" : prov.stage};
  require_file(detections, "detections");
  const auto dets = in_stage(report.stage, [&] { return read_detections(detections, features); });
  const auto records = in_stage(report.stage, [&] { return track_detections(dets, config); });
  write_tracks(out, records, prov);
  report.inputs = dets.size();
  std::set<int> ids;
  for (const auto& r : records) {
    if (r.stage == TrackStage::Confirmed) ids.insert(r.track_id);
  }
  report.outputs = ids.size();
  return report;
}

StageReport fuse_files(const fs::path& left_tracks, const fs::path& right_tracks, const fs::path& pairs,
                       const fs::path& measurements, const fs::path& out, const Provenance& prov) {
  StageReport report{"fuse"};
  for (const auto& [p, what] : {std::pair{left_tracks, "left tracks"}, std::pair{right_tracks, "right tracks"},
                                std::pair{pairs, "pair file"}, std::pair{measurements, "measurement file"}}) {
    require_file(p, what);
  }
  const auto lt = in_stage("fuse", [&] { return read_tracks(left_tracks); });
  const auto rt = in_stage("fuse", [&] { return read_tracks(right_tracks); });
  const auto pr = in_stage("fuse", [&] { return read_pairs(pairs); });
  const auto ms = in_stage("fuse", [&] { return read_measurements(measurements); });
  const auto fish = in_stage("fuse", [&] { return fuse_records(lt, rt, pr, ms); });
  write_fish(out, fish, prov);
  report.inputs = ms.size();
  report.outputs = fish.size();
  return report;
}

// --- pipeline config ----------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "pipeline config must be an object");
  static const std::set<std::string> kKeys = {
      "rig",         "left_detections",     "right_detections",      "left_features", "right_features",
      "left_masks",  "right_masks",         "out_dir",               "epipolar_delta_pair",
      "epipolar_band_measure", "tracker",   "log_level",             "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw Error(ErrorCode::ConfigError, "unknown pipeline key '" + key + "'");
  }
  auto resolve = [&](const std::string& key) {
    if (!j.contains(key)) throw Error(ErrorCode::ConfigError, "pipeline config lacks '" + key + "'");
    const fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
  };
  PipelineConfig c;
  try {
    c.rig = resolve("rig");
    c.left_detections = resolve("left_detections");
    c.right_detections = resolve("right_detections");
    c.left_masks = resolve("left_masks");
    c.right_masks = resolve("right_masks");
    if (j.contains("left_features")) c.left_features = resolve("left_features");
    if (j.contains("right_features")) c.right_features = resolve("right_features");
    c.out_dir = j.contains("out_dir") ? resolve("out_dir") : base_dir / "out";
    c.epipolar_delta_pair = j.value("epipolar_delta_pair", c.epipolar_delta_pair);
    c.epipolar_band_measure = j.value("epipolar_band_measure", c.epipolar_band_measure);
    if (j.contains("tracker")) c.tracker = tracker_config_from_json(j.at("tracker"));
    c.log_level = j.value("log_level", c.log_level);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("pipeline config: ") + e.what());
  }
  return c;
}

Json PipelineConfig::parameters_json() const {
  return {{"epipolar_delta_pair", epipolar_delta_pair},
          {"epipolar_band_measure", epipolar_band_measure},
          {"tracker", tracker_config_to_json(tracker)}};
}

void PipelineConfig::validate() const {
  if (!(epipolar_delta_pair > 0.0)) throw Error(ErrorCode::ConfigError, "epipolar_delta_pair must be positive");
  if (!(epipolar_band_measure > 0.0)) throw Error(ErrorCode::ConfigError, "epipolar_band_measure must be positive");
  static const std::set<std::string> kLevels = {"quiet", "error", "warn", "info", "debug"};
  if (!kLevels.count(log_level)) throw Error(ErrorCode::ConfigError, "unknown log_level '" + log_level + "'");
  tracker.validate();
  require_file(rig, "rig file");
  require_file(left_detections, "left detections");
  require_file(right_detections, "right detections");
  require_file(left_masks, "left mask index");
  require_file(right_masks, "right mask index");
  if (left_features) require_file(*left_features, "left feature sidecar");
  if (right_features) require_file(*right_features, "right feature sidecar");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  const Json j = read_json_file(path, true);
  return PipelineConfig::from_json(j, path.parent_path());
}

PipelineReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  load_rig(config.rig);  // config error before any processing

  const std::uint64_t hash = config_hash(config.parameters_json());
  auto prov = [&](const std::string& stage) { return Provenance{hash, config.seed, stage}; };
  const fs::path out = config.out_dir;
  fs::create_directories(out);

  PipelineReport report;
  PairingOptions pairing;
  pairing.epipolar_delta = config.epipolar_delta_pair;
  report.stages.push_back(pair_files(config.rig, config.left_detections, config.right_detections, out / "pairs.jsonl",
                                     pairing, prov("pair"), config.left_features, config.right_features));
  report.stages.push_back(measure_files(config.rig, out / "pairs.jsonl", config.left_masks, config.right_masks,
                                        out / "measurements.csv", config.epipolar_band_measure, prov("measure")));

  auto left = std::async(std::launch::async, [&] {
    return track_files(config.left_detections, config.tracker, out / "tracksL.jsonl", prov("track_left"),
                       config.left_features);
  });
  auto right = std::async(std::launch::async, [&] {
    return track_files(config.right_detections, config.tracker, out / "tracksR.jsonl", prov("track_right"),
                       config.right_features);
  });
  // get() both before rethrowing so neither task outlives this frame
  std::exception_ptr failure;
  StageReport lr, rr;
  try {
    lr = left.get();
  } catch (...) {
    failure = std::current_exception();
  }
  try {
    rr = right.get();
  } catch (...) {
    if (!failure) failure = std::current_exception();
  }
  if (failure) std::rethrow_exception(failure);
  report.stages.push_back(lr);
  report.stages.push_back(rr);

  report.stages.push_back(fuse_files(out / "tracksL.jsonl", out / "tracksR.jsonl", out / "pairs.jsonl",
                                     out / "measurements.csv", out / "fish.csv", prov("fuse")));

  Json rj = report.to_json();
  rj["meta"] = provenance_json(prov("run"))["meta"];
  write_text_file(out / "report.json", rj.dump(2) + "\n");
  return report;
}

// --- synthetic scenario files ---------------------------------------------------

namespace {

Json intrinsics_json(const Intrinsics& k, const DistortionCoefficients& d) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"skew", k.skew}, {"dist", {d.k1, d.k2, d.p1, d.p2, d.k3}}};
}

void intrinsics_from(const Json& j, Intrinsics& k, DistortionCoefficients& d) {
  for (const auto& [key, value] : j.items()) {
    if (key == "fx") {
      k.fx = value.get<double>();
    } else if (key == "fy") {
      k.fy = value.get<double>();
    } else if (key == "cx") {
      k.cx = value.get<double>();
    } else if (key == "cy") {
      k.cy = value.get<double>();
    } else if (key == "skew") {
      k.skew = value.get<double>();
    } else if (key == "dist") {
      const auto v = value.get<std::vector<double>>();
      if (v.size() != 5) throw Error(ErrorCode::ConfigError, "dist must have 5 entries");
      d = {v[0], v[1], v[2], v[3], v[4]};
    } else {
      throw Error(ErrorCode::ConfigError, "unknown camera key '" + key + "'");
    }
  }
}

}  // namespace

Json scenario_to_json(const ScenarioConfig& c) {
  return {{"n_fish", c.n_fish},
          {"n_frames", c.n_frames},
          {"seed", c.seed},
          {"feature_dim", c.feature_dim},
          {"n_classes", c.n_classes},
          {"n_boards", c.n_boards},
          {"board_rows", c.board_rows},
          {"board_cols", c.board_cols},
          {"board_pitch_m", c.board_pitch_m},
          {"noise",
           {{"corner_px", c.noise.corner_px},
            {"mask_dilation_px", c.noise.mask_dilation_px},
            {"feature_std", c.noise.feature_std},
            {"drop_probability", c.noise.drop_probability}}},
          {"rig",
           {{"baseline_m", c.rig.baseline_m},
            {"toe_in_rad", c.rig.toe_in_rad},
            {"width", c.rig.width},
            {"height", c.rig.height},
            {"left", intrinsics_json(c.rig.left_intrinsics, c.rig.left_distortion)},
            {"right", intrinsics_json(c.rig.right_intrinsics, c.rig.right_distortion)}}}};
}

ScenarioConfig scenario_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "scenario must be an object");
  ScenarioConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_fish") {
        c.n_fish = value.get<int>();
      } else if (key == "n_frames") {
        c.n_frames = value.get<int>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "feature_dim") {
        c.feature_dim = value.get<int>();
      } else if (key == "n_classes") {
        c.n_classes = value.get<int>();
      } else if (key == "n_boards") {
        c.n_boards = value.get<int>();
      } else if (key == "board_rows") {
        c.board_rows = value.get<int>();
      } else if (key == "board_cols") {
        c.board_cols = value.get<int>();
      } else if (key == "board_pitch_m") {
        c.board_pitch_m = value.get<double>();
      } else if (key == "noise") {
        for (const auto& [nk, nv] : value.items()) {
          if (nk == "corner_px") {
            c.noise.corner_px = nv.get<double>();
          } else if (nk == "mask_dilation_px") {
            c.noise.mask_dilation_px = nv.get<int>();
          } else if (nk == "feature_std") {
            c.noise.feature_std = nv.get<double>();
          } else if (nk == "drop_probability") {
            c.noise.drop_probability = nv.get<double>();
          } else {
            throw Error(ErrorCode::ConfigError, "unknown noise key '" + nk + "'");
          }
        }
      } else if (key == "rig") {
        for (const auto& [rk, rv] : value.items()) {
          if (rk == "baseline_m") {
            c.rig.baseline_m = rv.get<double>();
          } else if (rk == "toe_in_rad") {
            c.rig.toe_in_rad = rv.get<double>();
          } else if (rk == "width") {
            c.rig.width = rv.get<int>();
          } else if (rk == "height") {
            c.rig.height = rv.get<int>();
          } else if (rk == "left") {
            intrinsics_from(rv, c.rig.left_intrinsics, c.rig.left_distortion);
          } else if (rk == "right") {
            intrinsics_from(rv, c.rig.right_intrinsics, c.rig.right_distortion);
          } else {
            throw Error(ErrorCode::ConfigError, "unknown rig key '" + rk + "'");
          }
        }
      } else {
        throw Error(ErrorCode::ConfigError, "unknown scenario key '" + key + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

void write_scenario(const ScenarioConfig& cfg, const fs::path& out_dir, MaskStorage storage) {
  cfg.validate();
  fs::create_directories(out_dir);
  const Provenance prov{config_hash(scenario_to_json(cfg)), cfg.seed, "simulate"};

  const StereoRig rig = make_synthetic_rig(cfg.rig, false);
  const RectifiedStereo stereo = make_rectified(rig);
  write_text_file(out_dir / "rig.json", rig_to_json(rig).dump(2) + "\n");

  // Corners come from the same distortion-free rig so that a calibration
  // of corners.json can stand in for rig.json.
  ScenarioConfig board_cfg = cfg;
  board_cfg.rig.left_distortion = {};
  board_cfg.rig.right_distortion = {};
  const CheckerboardScenario boards = generate_checkerboard_observations(board_cfg);
  write_text_file(out_dir / "corners.json", corners_to_json(boards.views).dump() + "\n");

  const std::vector<SyntheticFish> fish = generate_fish(cfg);
  std::vector<DetectionRecord> lefts, rights;
  std::vector<MaskRecord> left_masks, right_masks;
  Json frames = Json::array();
  for (int f = 0; f < cfg.n_frames; ++f) {
    RenderedFrame rf = render_fish_frame(fish, f, stereo, cfg);
    Json jl = Json::array(), jr = Json::array();
    for (std::size_t i = 0; i < rf.left.size(); ++i) {
      jl.push_back({rf.left[i].id, rf.left_fish[i]});
      left_masks.push_back({f, rf.left[i].id, std::move(rf.left_masks[i])});
      lefts.push_back(std::move(rf.left[i]));
    }
    for (std::size_t i = 0; i < rf.right.size(); ++i) {
      jr.push_back({rf.right[i].id, rf.right_fish[i]});
      right_masks.push_back({f, rf.right[i].id, std::move(rf.right_masks[i])});
      rights.push_back(std::move(rf.right[i]));
    }
    frames.push_back({{"frame", f}, {"left", jl}, {"right", jr}, {"pairs", rf.true_pairs}});
  }

  write_detections(out_dir / "detL.jsonl", lefts, prov);
  write_detections(out_dir / "detR.jsonl", rights, prov);
  if (storage == MaskStorage::Rle) {
    write_masks(out_dir / "masksL.jsonl", left_masks, prov, storage);
    write_masks(out_dir / "masksR.jsonl", right_masks, prov, storage);
  } else {
    write_masks(out_dir / "masksL" / "index.jsonl", left_masks, prov, storage);
    write_masks(out_dir / "masksR" / "index.jsonl", right_masks, prov, storage);
  }

  Json jf = Json::array();
  for (const auto& f : fish) {
    jf.push_back({{"identity", f.identity},
                  {"species", f.species},
                  {"fork_length_m", f.fork_length_m},
                  {"height_m", f.height_m},
                  {"start", {f.start.x(), f.start.y(), f.start.z()}},
                  {"velocity", {f.velocity.x(), f.velocity.y(), f.velocity.z()}}});
  }
  Json truth = {{"meta", provenance_json(prov)["meta"]}, {"fish", jf}, {"frames", frames}};
  write_text_file(out_dir / "truth.json", truth.dump() + "\n");
  write_text_file(out_dir / "scenario.json", scenario_to_json(cfg).dump(2) + "\n");

  const bool rle = storage == MaskStorage::Rle;
  const Json pipeline = {{"rig", "rig.json"},
                         {"left_detections", "detL.jsonl"},
                         {"right_detections", "detR.jsonl"},
                         {"left_masks", rle ? "masksL.jsonl" : "masksL/index.jsonl"},
                         {"right_masks", rle ? "masksR.jsonl" : "masksR/index.jsonl"},
                         {"out_dir", "out"},
                         {"epipolar_delta_pair", 5.0},
                         {"epipolar_band_measure", 3.0},
                         {"tracker", tracker_config_to_json(TrackerConfig{})},
                         {"seed", cfg.seed}};
  write_text_file(out_dir / "pipeline.json", pipeline.dump(2) + "\n");
}

}  // namespace stereofish
