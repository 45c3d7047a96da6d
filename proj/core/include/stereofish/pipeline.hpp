#pragma once

// Stage drivers over the interchange files, the synthetic scenario writer,
// and the full pair -> measure -> track(L) || track(R) -> fuse pipeline.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stereofish/calibration.hpp"
#include "stereofish/error.hpp"
#include "stereofish/fusion.hpp"
#include "stereofish/mask_io.hpp"
#include "stereofish/pairing.hpp"
#include "stereofish/serialization.hpp"
#include "stereofish/synthetic.hpp"
#include "stereofish/tracking.hpp"

namespace stereofish {

struct StageReport {
  std::string stage;
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::size_t skipped = 0;  // records a stage could not use (e.g. unmeasurable pairs)
};

struct PipelineReport {
  std::vector<StageReport> stages;
  Json to_json() const;
};

/// Re-raises an Error with the stage name in its message, keeping the code.
[[noreturn]] void rethrow_in_stage(const std::string& stage, const Error& e);

// --- in-memory stages -------------------------------------------------------

using FramePairings = std::vector<std::pair<int, FramePairing>>;
using MaskIndex = std::map<std::pair<int, int>, BinaryMask>;  // (frame, id) -> mask

FramePairings pair_detections(std::span<const DetectionRecord> lefts, std::span<const DetectionRecord> rights,
                              const RectifiedStereo& stereo, const PairingOptions& options = {});

/// Measures every pair whose two masks exist. Pairs that cannot be measured
/// are counted in `skipped`; a pair without a mask is a DataError.
std::vector<MeasurementRow> measure_pairs(std::span<const PairedDetection> pairs, const MaskIndex& left_masks,
                                          const MaskIndex& right_masks, const RectifiedStereo& stereo, double band,
                                          std::size_t* skipped = nullptr);

/// Steps the tracker over every frame of [first, last] (defaults to the
/// detections' frame span) so that empty frames age the tracks.
std::vector<TrackFrameRecord> track_detections(std::span<const DetectionRecord> detections,
                                               const TrackerConfig& config,
                                               std::optional<std::pair<int, int>> frame_range = std::nullopt);

std::vector<FusedFishRecord> fuse_records(std::span<const TrackFrameRecord> left_tracks,
                                          std::span<const TrackFrameRecord> right_tracks,
                                          std::span<const PairedDetection> pairs,
                                          std::span<const MeasurementRow> measurements);

MaskIndex index_masks(std::span<const MaskRecord> masks);

// --- file stages ------------------------------------------------------------

CalibrationResult calibrate_files(const fs::path& corners, const fs::path& out_rig);

/// Writes the rectification (rotations, shared intrinsics, baseline). With
/// detections, also writes their rectified box centres as JSONL.
StageReport rectify_files(const fs::path& rig, const fs::path& out, const std::optional<fs::path>& detections,
                          Side side, const std::optional<fs::path>& centers_out, const Provenance& prov);

StageReport pair_files(const fs::path& rig, const fs::path& left, const fs::path& right, const fs::path& out,
                       const PairingOptions& options, const Provenance& prov,
                       const std::optional<fs::path>& left_features = std::nullopt,
                       const std::optional<fs::path>& right_features = std::nullopt);

StageReport measure_files(const fs::path& rig, const fs::path& pairs, const fs::path& left_masks,
                          const fs::path& right_masks, const fs::path& out, double band, const Provenance& prov);

StageReport track_files(const fs::path& detections, const TrackerConfig& config, const fs::path& out,
                        const Provenance& prov, const std::optional<fs::path>& features = std::nullopt);

StageReport fuse_files(const fs::path& left_tracks, const fs::path& right_tracks, const fs::path& pairs,
                       const fs::path& measurements, const fs::path& out, const Provenance& prov);

// --- full pipeline ------------------------------------------------------------

struct PipelineConfig {
  fs::path rig;
  fs::path left_detections;
  fs::path right_detections;
  std::optional<fs::path> left_features;
  std::optional<fs::path> right_features;
  fs::path left_masks;
  fs::path right_masks;
  fs::path out_dir = "out";
  double epipolar_delta_pair = 5.0;
  double epipolar_band_measure = 3.0;
  TrackerConfig tracker;
  std::string log_level = "info";
  std::uint64_t seed = 0;

  /// Relative paths are resolved against base_dir. ConfigError on bad keys.
  static PipelineConfig from_json(const Json& j, const fs::path& base_dir);
  /// Parameters that affect outputs (hashed into every artifact header).
  Json parameters_json() const;
  /// Deltas positive, tracker valid, every input file present (ConfigError).
  void validate() const;
};

PipelineConfig load_pipeline_config(const fs::path& path);

/// Outputs in out_dir: pairs.jsonl, measurements.csv, tracksL.jsonl,
/// tracksR.jsonl, fish.csv, report.json.
PipelineReport run_pipeline(const PipelineConfig& config);

// --- synthetic scenario files ---------------------------------------------------

Json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const Json& j);

/// Writes rig.json, corners.json, detL/detR.jsonl (+ feature sidecars),
/// masksL/masksR.jsonl (RLE, or PNG files in masksL/ and masksR/),
/// truth.json, scenario.json and a pipeline.json wired to those files.
void write_scenario(const ScenarioConfig& cfg, const fs::path& out_dir, MaskStorage storage = MaskStorage::Rle);

}  // namespace stereofish
