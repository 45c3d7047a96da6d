#pragma once

// Interchange formats: rig/corner JSON, detection and stage JSONL with an
// optional binary feature sidecar, measurement and fish CSV tables.
//
// Every JSONL output starts with {"meta":{"config_hash":...,"seed":...,"stage":...}}
// and every CSV output with "# config_hash=...,seed=...,stage=...".
// Readers skip those header lines.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stereofish/calibration.hpp"
#include "stereofish/detection.hpp"
#include "stereofish/fusion.hpp"
#include "stereofish/measurement.hpp"
#include "stereofish/pairing.hpp"
#include "stereofish/tracking.hpp"

namespace stereofish {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// --- provenance -----------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes);
/// FNV-1a 64 of the compact dump (keys sorted by the json object model).
std::uint64_t config_hash(const Json& config);
std::string hash_hex(std::uint64_t hash);

struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string stage;
};

Json provenance_json(const Provenance& p);
std::string csv_provenance_line(const Provenance& p);

// --- files ----------------------------------------------------------------

/// Whole-file read; ConfigError when missing when `config`, DataError otherwise.
std::string read_text_file(const fs::path& path, bool config = false);
/// Writes atomically enough for our purposes (truncate + write), creating parent dirs.
void write_text_file(const fs::path& path, std::string_view text);
/// Parses one JSON document; DataError (or ConfigError) with the file name on failure.
Json read_json_file(const fs::path& path, bool config = false);

/// Non-empty, non-header JSONL lines with their 1-based line numbers.
std::vector<std::pair<int, Json>> read_jsonl(const fs::path& path);

/// Builds a DataError message "<file>:<line>: <what>".
[[noreturn]] void throw_record_error(const fs::path& path, int line, const std::string& what);

// --- rig ------------------------------------------------------------------

Json camera_to_json(const CameraModel& camera);
CameraModel camera_from_json(const Json& j);
Json transform_to_json(const RigidTransform& t);
RigidTransform transform_from_json(const Json& j);
Json rig_to_json(const StereoRig& rig, std::optional<double> rms_px = std::nullopt);
StereoRig rig_from_json(const Json& j);
/// Missing or malformed rig files are configuration errors.
StereoRig load_rig(const fs::path& path);

Json rectification_to_json(const RectifiedStereo& stereo);

// --- calibration corners --------------------------------------------------

Json corners_to_json(std::span<const CornerObservationSet> views);
std::vector<CornerObservationSet> corners_from_json(const Json& j);

// --- detections -----------------------------------------------------------

Json detection_to_json(const DetectionRecord& det, bool include_feature);
DetectionRecord detection_from_json(const Json& j);

/// Sidecar path next to a JSONL file: det.jsonl -> det.feat.bin.
fs::path default_sidecar_path(const fs::path& jsonl);

/// Binary layout (little endian): "SFFEAT01", uint32 dim, uint32 count,
/// count x (int64 frame, int64 id, uint64 byte offset), then float32 data.
/// Records with an empty feature are not stored.
void write_feature_sidecar(const fs::path& path, std::span<const DetectionRecord> detections);
/// Fills the features of matching (frame, id) records. DataError on a
/// malformed file, duplicate keys, or records that already carry a feature.
void read_feature_sidecar(const fs::path& path, std::vector<DetectionRecord>& detections);

/// With `sidecar`, features go to default_sidecar_path(path) instead of inline.
void write_detections(const fs::path& path, std::span<const DetectionRecord> detections, const Provenance& prov,
                      bool sidecar = true);
/// Sorted by (frame, id). The sidecar is used when given, else auto-detected.
std::vector<DetectionRecord> read_detections(const fs::path& path,
                                             const std::optional<fs::path>& sidecar = std::nullopt);

/// Detections grouped by frame (ascending).
std::vector<std::pair<int, std::vector<DetectionRecord>>> group_by_frame(std::span<const DetectionRecord> detections);

// --- pairs ----------------------------------------------------------------

void write_pairs(const fs::path& path, std::span<const std::pair<int, FramePairing>> frames, const Provenance& prov);
std::vector<PairedDetection> read_pairs(const fs::path& path);

// --- tracks ---------------------------------------------------------------

Json tracker_config_to_json(const TrackerConfig& config);
/// Unknown keys are rejected (ConfigError) so that typos surface.
TrackerConfig tracker_config_from_json(const Json& j);

Json track_record_to_json(const TrackFrameRecord& r);
TrackFrameRecord track_record_from_json(const Json& j);
void write_tracks(const fs::path& path, std::span<const TrackFrameRecord> records, const Provenance& prov);
std::vector<TrackFrameRecord> read_tracks(const fs::path& path);

// --- measurements / fish ----------------------------------------------------

struct MeasurementRow {
  FrameMeasurement measurement;
  MeasurementFlags flags;
};

std::string flags_to_string(const MeasurementFlags& flags);
MeasurementFlags flags_from_string(std::string_view text);

void write_measurements(const fs::path& path, std::span<const MeasurementRow> rows, const Provenance& prov);
std::vector<MeasurementRow> read_measurements(const fs::path& path);

void write_fish(const fs::path& path, std::span<const FusedFishRecord> fish, const Provenance& prov);

/// Shortest round-trip decimal form of a double ("nan" for NaN).
std::string format_number(double v);

}  // namespace stereofish
