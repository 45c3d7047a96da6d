#include "stereofish/serialization.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stereofish/error.hpp"

namespace stereofish {

// --- provenance -----------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const Json& config) { return fnv1a64(config.dump()); }

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

Json provenance_json(const Provenance& p) {
  return {{"meta", {{"config_hash", hash_hex(p.config_hash)}, {"seed", p.seed}, {"stage", p.stage}}}};
}

std::string csv_provenance_line(const Provenance& p) {
  return "# config_hash=" + hash_hex(p.config_hash) + ",seed=" + std::to_string(p.seed) + ",stage=" + p.stage;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --- files ----------------------------------------------------------------

std::string read_text_file(const fs::path& path, bool config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(config ? ErrorCode::ConfigError : ErrorCode::DataError, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::DataError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::DataError, "write failed for " + path.string());
}

Json read_json_file(const fs::path& path, bool config) {
  const std::string text = read_text_file(path, config);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(config ? ErrorCode::ConfigError : ErrorCode::DataError, path.string() + ": " + e.what());
  }
}

void throw_record_error(const fs::path& path, int line, const std::string& what) {
  throw Error(ErrorCode::DataError, path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::pair<int, Json>> read_jsonl(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::vector<std::pair<int, Json>> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw_record_error(path, number, e.what());
    }
    if (j.is_object() && j.contains("meta")) continue;
    out.emplace_back(number, std::move(j));
  }
  return out;
}

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

template <typename Fn>
auto with_locator(const fs::path& path, int line, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw_record_error(path, line, e.what());
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::Numeric) throw;
    throw_record_error(path, line, e.what());
  }
}

Json matrix_to_json(const Eigen::Matrix3d& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

Eigen::Matrix3d matrix_from_json(const Json& a) {
  if (!a.is_array() || a.size() != 9) throw Error(ErrorCode::DataError, "rotation must have 9 entries");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = a.at(3 * r + c).get<double>();
  }
  return m;
}

Eigen::Vector3d vector3_from_json(const Json& a) {
  if (!a.is_array() || a.size() != 3) throw Error(ErrorCode::DataError, "translation must have 3 entries");
  return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
}

}  // namespace

// --- rig ------------------------------------------------------------------

Json transform_to_json(const RigidTransform& t) {
  return {{"rotation", matrix_to_json(t.rotation())},
          {"translation", {t.translation().x(), t.translation().y(), t.translation().z()}}};
}

RigidTransform transform_from_json(const Json& j) {
  return {matrix_from_json(j.at("rotation")), vector3_from_json(j.at("translation"))};
}

Json camera_to_json(const CameraModel& camera) {
  const auto& k = camera.intrinsics;
  const auto& d = camera.distortion;
  Json j = transform_to_json(camera.pose);
  j["fx"] = k.fx;
  j["fy"] = k.fy;
  j["cx"] = k.cx;
  j["cy"] = k.cy;
  j["skew"] = k.skew;
  j["dist"] = {d.k1, d.k2, d.p1, d.p2, d.k3};
  return j;
}

CameraModel camera_from_json(const Json& j) {
  CameraModel c;
  c.intrinsics.fx = j.at("fx").get<double>();
  c.intrinsics.fy = j.at("fy").get<double>();
  c.intrinsics.cx = j.at("cx").get<double>();
  c.intrinsics.cy = j.at("cy").get<double>();
  c.intrinsics.skew = j.value("skew", 0.0);
  if (j.contains("dist")) {
    const Json& d = j.at("dist");
    if (!d.is_array() || d.size() != 5) throw Error(ErrorCode::DataError, "dist must have 5 entries");
    c.distortion = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>(), d[3].get<double>(), d[4].get<double>()};
  }
  if (j.contains("rotation")) c.pose = transform_from_json(j);
  c.intrinsics.validate();
  return c;
}

Json rig_to_json(const StereoRig& rig, std::optional<double> rms_px) {
  Json j = {{"left", camera_to_json(rig.left)},
            {"right", camera_to_json(rig.right)},
            {"relative", transform_to_json(rig.relative)}};
  if (rms_px) j["rms_px"] = *rms_px;
  return j;
}

StereoRig rig_from_json(const Json& j) {
  StereoRig rig;
  rig.left = camera_from_json(j.at("left"));
  rig.right = camera_from_json(j.at("right"));
  rig.relative = transform_from_json(j.at("relative"));
  rig.validate();
  return rig;
}

StereoRig load_rig(const fs::path& path) {
  const Json j = read_json_file(path, true);
  try {
    return rig_from_json(j);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

Json rectification_to_json(const RectifiedStereo& stereo) {
  const auto& k = stereo.rectification.new_intrinsics;
  return {{"rotation_left", matrix_to_json(stereo.rectification.rotation_left)},
          {"rotation_right", matrix_to_json(stereo.rectification.rotation_right)},
          {"fx", k.fx},
          {"fy", k.fy},
          {"cx", k.cx},
          {"cy", k.cy},
          {"skew", k.skew},
          {"baseline", stereo.baseline()}};
}

// --- corners --------------------------------------------------------------

Json corners_to_json(std::span<const CornerObservationSet> views) {
  Json out = Json::array();
  for (const auto& v : views) {
    Json board = Json::array(), left = Json::array(), right = Json::array();
    for (const auto& p : v.board_points) board.push_back({p.x(), p.y(), p.z()});
    for (const auto& p : v.image_points_left) left.push_back({p.u, p.v});
    for (const auto& p : v.image_points_right) right.push_back({p.u, p.v});
    out.push_back({{"frame", v.frame_id}, {"board", board}, {"left", left}, {"right", right}});
  }
  return out;
}

std::vector<CornerObservationSet> corners_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorCode::DataError, "corners document must be an array of frames");
  std::vector<CornerObservationSet> out;
  int index = 0;
  for (const auto& f : j) {
    try {
      CornerObservationSet v;
      v.frame_id = f.value("frame", index);
      for (const auto& p : f.at("board")) {
        v.board_points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.size() > 2 ? p.at(2).get<double>() : 0.0);
      }
      for (const auto& p : f.at("left")) v.image_points_left.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      for (const auto& p : f.at("right")) v.image_points_right.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      v.validate();
      out.push_back(std::move(v));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::DataError, "corner frame " + std::to_string(index) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::DataError, "corner frame " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  return out;
}

// --- detections -----------------------------------------------------------

Json detection_to_json(const DetectionRecord& det, bool include_feature) {
  Json top5 = Json::array();
  for (const auto& cs : det.top5) top5.push_back({cs.class_id, cs.score});
  Json j = {{"frame", det.frame},
            {"id", det.id},
            {"box", {det.box.x, det.box.y, det.box.w, det.box.h}},
            {"conf", det.confidence},
            {"top5", top5}};
  if (include_feature && !det.feature.empty()) j["feature"] = det.feature;
  return j;
}

DetectionRecord detection_from_json(const Json& j) {
  DetectionRecord d;
  d.frame = j.at("frame").get<int>();
  d.id = j.at("id").get<int>();
  const Json& b = j.at("box");
  if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::DataError, "box must be [x,y,w,h]");
  d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  d.confidence = j.value("conf", 1.0);
  if (j.contains("top5")) {
    for (const auto& cs : j.at("top5")) d.top5.push_back({cs.at(0).get<int>(), cs.at(1).get<double>()});
  }
  if (j.contains("feature")) d.feature = j.at("feature").get<std::vector<float>>();
  d.validate();
  return d;
}

fs::path default_sidecar_path(const fs::path& jsonl) {
  fs::path p = jsonl;
  p.replace_extension(".feat.bin");
  return p;
}

namespace {

constexpr char kSidecarMagic[8] = {'S', 'F', 'F', 'E', 'A', 'T', '0', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  const U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos, const fs::path& path) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::DataError, path.string() + ": truncated feature sidecar");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(u);
}

}  // namespace

void write_feature_sidecar(const fs::path& path, std::span<const DetectionRecord> detections) {
  std::vector<const DetectionRecord*> stored;
  std::uint32_t dim = 0;
  for (const auto& d : detections) {
    if (d.feature.empty()) continue;
    if (dim == 0) dim = static_cast<std::uint32_t>(d.feature.size());
    if (d.feature.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "features of different dimensions in one file");
    }
    stored.push_back(&d);
  }
  std::string out(kSidecarMagic, sizeof kSidecarMagic);
  put_le<std::uint32_t>(out, dim);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stored.size()));
  const std::uint64_t header = out.size() + stored.size() * 24;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    put_le<std::int64_t>(out, stored[i]->frame);
    put_le<std::int64_t>(out, stored[i]->id);
    put_le<std::uint64_t>(out, header + static_cast<std::uint64_t>(i) * dim * 4);
  }
  out.reserve(header + stored.size() * dim * 4);
  for (const auto* d : stored) {
    for (float f : d->feature) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  write_text_file(path, out);
}

void read_feature_sidecar(const fs::path& path, std::vector<DetectionRecord>& detections) {
  const std::string in = read_text_file(path);
  if (in.size() < sizeof kSidecarMagic || std::memcmp(in.data(), kSidecarMagic, sizeof kSidecarMagic) != 0) {
    throw Error(ErrorCode::DataError, path.string() + ": not a feature sidecar");
  }
  std::size_t pos = sizeof kSidecarMagic;
  const auto dim = get_le<std::uint32_t>(in, pos, path);
  const auto count = get_le<std::uint32_t>(in, pos, path);

  std::map<std::pair<std::int64_t, std::int64_t>, DetectionRecord*> index;
  for (auto& d : detections) index[{d.frame, d.id}] = &d;

  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto frame = get_le<std::int64_t>(in, pos, path);
    const auto id = get_le<std::int64_t>(in, pos, path);
    const auto offset = get_le<std::uint64_t>(in, pos, path);
    if (!seen.insert({frame, id}).second) {
      throw Error(ErrorCode::DataError, path.string() + ": duplicate feature for frame " + std::to_string(frame) +
                                            " id " + std::to_string(id));
    }
    if (offset + static_cast<std::uint64_t>(dim) * 4 > in.size()) {
      throw Error(ErrorCode::DataError, path.string() + ": feature offset out of range");
    }
    const auto it = index.find({frame, id});
    if (it == index.end()) continue;
    DetectionRecord& d = *it->second;
    if (!d.feature.empty()) {
      throw Error(ErrorCode::DataError, path.string() + ": frame " + std::to_string(frame) + " id " +
                                            std::to_string(id) + " has both inline and sidecar features");
    }
    d.feature.resize(dim);
    std::size_t p = offset;
    for (std::uint32_t k = 0; k < dim; ++k) d.feature[k] = std::bit_cast<float>(get_le<std::uint32_t>(in, p, path));
  }
}

void write_detections(const fs::path& path, std::span<const DetectionRecord> detections, const Provenance& prov,
                      bool sidecar) {
  std::vector<std::string> lines{provenance_json(prov).dump()};
  for (const auto& d : detections) lines.push_back(detection_to_json(d, !sidecar).dump());
  write_text_file(path, join_lines(lines));
  if (sidecar) write_feature_sidecar(default_sidecar_path(path), detections);
}

std::vector<DetectionRecord> read_detections(const fs::path& path, const std::optional<fs::path>& sidecar) {
  std::vector<DetectionRecord> out;
  std::set<std::pair<int, int>> keys;
  for (const auto& [line, j] : read_jsonl(path)) {
    DetectionRecord d = with_locator(path, line, [&] { return detection_from_json(j); });
    if (!keys.insert({d.frame, d.id}).second) throw_record_error(path, line, "duplicate detection id in frame");
    out.push_back(std::move(d));
  }
  const fs::path side = sidecar ? *sidecar : default_sidecar_path(path);
  if (sidecar || fs::exists(side)) read_feature_sidecar(side, out);
  std::stable_sort(out.begin(), out.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
    return std::make_pair(a.frame, a.id) < std::make_pair(b.frame, b.id);
  });
  return out;
}

std::vector<std::pair<int, std::vector<DetectionRecord>>> group_by_frame(std::span<const DetectionRecord> detections) {
  std::map<int, std::vector<DetectionRecord>> frames;
  for (const auto& d : detections) frames[d.frame].push_back(d);
  return {frames.begin(), frames.end()};
}

// --- pairs ----------------------------------------------------------------

void write_pairs(const fs::path& path, std::span<const std::pair<int, FramePairing>> frames, const Provenance& prov) {
  std::vector<std::string> lines{provenance_json(prov).dump()};
  for (const auto& [frame, fp] : frames) {
    for (const auto& p : fp.pairs) {
      lines.push_back(
          Json{{"frame", frame}, {"left_id", p.left_id}, {"right_id", p.right_id}, {"similarity", p.similarity}}.dump());
    }
    if (!fp.unpaired_left.empty() || !fp.unpaired_right.empty()) {
      lines.push_back(Json{{"frame", frame}, {"unpaired_left", fp.unpaired_left}, {"unpaired_right", fp.unpaired_right}}
                          .dump());
    }
  }
  write_text_file(path, join_lines(lines));
}

std::vector<PairedDetection> read_pairs(const fs::path& path) {
  std::vector<PairedDetection> out;
  for (const auto& [line, j] : read_jsonl(path)) {
    if (!j.contains("left_id")) continue;
    out.push_back(with_locator(path, line, [&] {
      return PairedDetection{j.at("frame").get<int>(), j.at("left_id").get<int>(), j.at("right_id").get<int>(),
                             j.value("similarity", 0.0)};
    }));
  }
  return out;
}

// --- tracks ---------------------------------------------------------------

Json tracker_config_to_json(const TrackerConfig& c) {
  return {{"iou_confirm_threshold", c.iou_confirm_threshold},
          {"confirm_frames", c.confirm_frames},
          {"mahalanobis_gate", c.mahalanobis_gate},
          {"lambda", c.lambda},
          {"max_age", c.max_age},
          {"appearance_gate", c.appearance_gate},
          {"gallery_size", c.gallery_size},
          {"noise",
           {{"position_weight", c.noise.position_weight},
            {"velocity_weight", c.noise.velocity_weight},
            {"aspect_std", c.noise.aspect_std},
            {"aspect_velocity_std", c.noise.aspect_velocity_std},
            {"aspect_measurement_std", c.noise.aspect_measurement_std},
            {"measurement_scale", c.noise.measurement_scale}}}};
}

TrackerConfig tracker_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "tracker config must be an object");
  TrackerConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "iou_confirm_threshold") {
        c.iou_confirm_threshold = value.get<double>();
      } else if (key == "confirm_frames") {
        c.confirm_frames = value.get<int>();
      } else if (key == "mahalanobis_gate") {
        c.mahalanobis_gate = value.get<double>();
      } else if (key == "lambda") {
        c.lambda = value.get<double>();
      } else if (key == "max_age") {
        c.max_age = value.get<int>();
      } else if (key == "appearance_gate") {
        c.appearance_gate = value.get<double>();
      } else if (key == "gallery_size") {
        c.gallery_size = value.get<std::size_t>();
      } else if (key == "noise") {
        for (const auto& [nk, nv] : value.items()) {
          if (nk == "position_weight") {
            c.noise.position_weight = nv.get<double>();
          } else if (nk == "velocity_weight") {
            c.noise.velocity_weight = nv.get<double>();
          } else if (nk == "aspect_std") {
            c.noise.aspect_std = nv.get<double>();
          } else if (nk == "aspect_velocity_std") {
            c.noise.aspect_velocity_std = nv.get<double>();
          } else if (nk == "aspect_measurement_std") {
            c.noise.aspect_measurement_std = nv.get<double>();
          } else if (nk == "measurement_scale") {
            c.noise.measurement_scale = nv.get<double>();
          } else {
            throw Error(ErrorCode::ConfigError, "unknown tracker noise key '" + nk + "'");
          }
        }
      } else {
        throw Error(ErrorCode::ConfigError, "unknown tracker key '" + key + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("tracker config: ") + e.what());
  }
  c.validate();
  return c;
}

Json track_record_to_json(const TrackFrameRecord& r) {
  Json top5 = Json::array();
  for (const auto& cs : r.top5) top5.push_back({cs.class_id, cs.score});
  Json j = {{"frame", r.frame},
            {"track_id", r.track_id},
            {"stage", std::string(to_string(r.stage))},
            {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
            {"top5", top5},
            {"time_since_update", r.time_since_update}};
  j["det_id"] = r.det_id ? Json(*r.det_id) : Json(nullptr);
  return j;
}

TrackFrameRecord track_record_from_json(const Json& j) {
  TrackFrameRecord r;
  r.frame = j.at("frame").get<int>();
  r.track_id = j.at("track_id").get<int>();
  r.stage = track_stage_from_string(j.at("stage").get<std::string>());
  const Json& b = j.at("box");
  if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::DataError, "box must be [x,y,w,h]");
  r.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  if (j.contains("top5")) {
    for (const auto& cs : j.at("top5")) r.top5.push_back({cs.at(0).get<int>(), cs.at(1).get<double>()});
  }
  r.time_since_update = j.value("time_since_update", 0);
  if (j.contains("det_id") && !j.at("det_id").is_null()) r.det_id = j.at("det_id").get<int>();
  return r;
}

void write_tracks(const fs::path& path, std::span<const TrackFrameRecord> records, const Provenance& prov) {
  std::vector<std::string> lines{provenance_json(prov).dump()};
  for (const auto& r : records) lines.push_back(track_record_to_json(r).dump());
  write_text_file(path, join_lines(lines));
}

std::vector<TrackFrameRecord> read_tracks(const fs::path& path) {
  std::vector<TrackFrameRecord> out;
  for (const auto& [line, j] : read_jsonl(path)) {
    out.push_back(with_locator(path, line, [&] { return track_record_from_json(j); }));
  }
  return out;
}

// --- CSV ------------------------------------------------------------------

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

double parse_double(const std::string& s) {
  if (s.empty() || s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::DataError, "not a number: '" + s + "'");
  }
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::DataError, "not an integer: '" + s + "'");
  }
  return v;
}

template <typename T>
std::string optional_field(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return format_number(*v);
  } else {
    return std::to_string(*v);
  }
}

}  // namespace

std::string flags_to_string(const MeasurementFlags& f) {
  std::vector<std::string> names;
  if (f.single_direction_length) names.emplace_back("single_direction_length");
  if (f.single_direction_height) names.emplace_back("single_direction_height");
  if (f.no_height) names.emplace_back("no_height");
  if (f.collinear_mask) names.emplace_back("collinear_mask");
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "|" : "") + names[i];
  return out;
}

MeasurementFlags flags_from_string(std::string_view text) {
  MeasurementFlags f;
  if (text.empty()) return f;
  for (const auto& name : split(text, '|')) {
    if (name == "single_direction_length") {
      f.single_direction_length = true;
    } else if (name == "single_direction_height") {
      f.single_direction_height = true;
    } else if (name == "no_height") {
      f.no_height = true;
    } else if (name == "collinear_mask") {
      f.collinear_mask = true;
    } else {
      throw Error(ErrorCode::DataError, "unknown measurement flag '" + name + "'");
    }
  }
  return f;
}

namespace {
constexpr std::string_view kMeasurementHeader = "frame,left_id,right_id,fork_length_m,height_m,cx,cy,cz,flags";
constexpr std::string_view kFishHeader =
    "fish_id,species,species_score,n_obs,fork_length_m,height_m,first_frame,last_frame";
}  // namespace

void write_measurements(const fs::path& path, std::span<const MeasurementRow> rows, const Provenance& prov) {
  std::vector<std::string> lines{csv_provenance_line(prov), std::string(kMeasurementHeader)};
  for (const auto& r : rows) {
    const auto& m = r.measurement;
    lines.push_back(std::to_string(m.frame) + "," + std::to_string(m.left_id) + "," + std::to_string(m.right_id) + "," +
                    format_number(m.fork_length_m) + "," + format_number(m.height_m) + "," +
                    format_number(m.centroid.x) + "," + format_number(m.centroid.y) + "," +
                    format_number(m.centroid.z) + "," + flags_to_string(r.flags));
  }
  write_text_file(path, join_lines(lines));
}

std::vector<MeasurementRow> read_measurements(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  int number = 0;
  bool header_seen = false;
  std::vector<MeasurementRow> out;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kMeasurementHeader) throw_record_error(path, number, "unexpected header");
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 9) throw_record_error(path, number, "expected 9 fields");
    try {
      MeasurementRow r;
      r.measurement.frame = parse_int(f[0]);
      r.measurement.left_id = parse_int(f[1]);
      r.measurement.right_id = parse_int(f[2]);
      r.measurement.fork_length_m = parse_double(f[3]);
      r.measurement.height_m = parse_double(f[4]);
      r.measurement.centroid = {parse_double(f[5]), parse_double(f[6]), parse_double(f[7])};
      r.flags = flags_from_string(f[8]);
      out.push_back(r);
    } catch (const Error& e) {
      throw_record_error(path, number, e.what());
    }
  }
  return out;
}

void write_fish(const fs::path& path, std::span<const FusedFishRecord> fish, const Provenance& prov) {
  std::vector<std::string> lines{csv_provenance_line(prov), std::string(kFishHeader)};
  for (const auto& f : fish) {
    lines.push_back(std::to_string(f.fish_id) + "," + optional_field(f.species) + "," + format_number(f.species_score) +
                    "," + std::to_string(f.n_obs) + "," + optional_field(f.fork_length_m) + "," +
                    optional_field(f.height_m) + "," + std::to_string(f.first_frame) + "," +
                    std::to_string(f.last_frame));
  }
  write_text_file(path, join_lines(lines));
}

}  // namespace stereofish
