// stereofish command line: one subcommand per pipeline stage plus `run`.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stereofish/error.hpp"
#include "stereofish/pipeline.hpp"

namespace sf = stereofish;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(sf::ErrorCategory c) {
  switch (c) {
    case sf::ErrorCategory::Config: return kExitConfig;
    case sf::ErrorCategory::Data: return kExitData;
    case sf::ErrorCategory::Numeric: return kExitNumeric;
  }
  return kExitNumeric;
}

std::optional<sf::fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return sf::fs::path(s);
}

void print_report(const sf::StageReport& r) {
  std::cout << sf::Json{{"stage", r.stage}, {"inputs", r.inputs}, {"outputs", r.outputs}, {"skipped", r.skipped}}.dump()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo fish measurement pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir;
  app.add_option("--seed", seed, "Seed recorded in output headers (and used by simulate)");
  app.add_option("--config", config, "Stage configuration file");
  app.add_option("--out-dir", out_dir, "Output directory");

  auto out_path = [&](const std::string& explicit_path, const std::string& default_name) {
    if (!explicit_path.empty()) return sf::fs::path(explicit_path);
    return (out_dir.empty() ? sf::fs::path(".") : sf::fs::path(out_dir)) / default_name;
  };

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Stereo calibration from checkerboard corners");
  std::string corners, calib_out;
  calibrate->add_option("--corners", corners, "corners.json")->required();
  calibrate->add_option("--out", calib_out, "Output rig JSON");

  // rectify
  auto* rectify = app.add_subcommand("rectify", "Rectification of a calibrated rig (and detection centres)");
  std::string rect_rig, rect_out, rect_dets, rect_side = "left", rect_centers;
  rectify->add_option("--rig", rect_rig, "rig.json")->required();
  rectify->add_option("--out", rect_out, "Output rectification JSON");
  rectify->add_option("--dets", rect_dets, "Detections whose box centres are rectified");
  rectify->add_option("--side", rect_side, "Camera of --dets")->check(CLI::IsMember({"left", "right"}));
  rectify->add_option("--centers-out", rect_centers, "Output JSONL of rectified centres");

  // pair
  auto* pair = app.add_subcommand("pair", "Left/right detection pairing");
  std::string pair_rig, pair_left, pair_right, pair_out, pair_lf, pair_rf;
  double pair_delta = 5.0;
  pair->add_option("--rig", pair_rig, "rig.json")->required();
  pair->add_option("--left", pair_left, "Left detections JSONL")->required();
  pair->add_option("--right", pair_right, "Right detections JSONL")->required();
  pair->add_option("--out", pair_out, "Output pairs JSONL");
  pair->add_option("--left-features", pair_lf, "Left feature sidecar (default: next to --left)");
  pair->add_option("--right-features", pair_rf, "Right feature sidecar (default: next to --right)");
  pair->add_option("--delta", pair_delta, "Epipolar row tolerance, px");

  // measure
  auto* measure = app.add_subcommand("measure", "Fork length and height from paired masks");
  std::string meas_rig, meas_pairs, meas_lm, meas_rm, meas_out;
  double meas_band = 3.0;
  measure->add_option("--rig", meas_rig, "rig.json")->required();
  measure->add_option("--pairs", meas_pairs, "pairs.jsonl")->required();
  measure->add_option("--left-masks", meas_lm, "Left mask index JSONL")->required();
  measure->add_option("--right-masks", meas_rm, "Right mask index JSONL")->required();
  measure->add_option("--out", meas_out, "Output measurement CSV");
  measure->add_option("--band", meas_band, "Correspondence row band, px");

  // track
  auto* track = app.add_subcommand("track", "Single-camera multi-object tracking");
  std::string track_dets, track_out, track_features;
  track->add_option("--dets", track_dets, "Detections JSONL")->required();
  track->add_option("--out", track_out, "Output tracks JSONL");
  track->add_option("--features", track_features, "Feature sidecar (default: next to --dets)");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Left/right track association and per-fish summary");
  std::string fuse_tl, fuse_tr, fuse_pairs, fuse_meas, fuse_out;
  fuse->add_option("--tracks-left", fuse_tl, "Left tracks JSONL")->required();
  fuse->add_option("--tracks-right", fuse_tr, "Right tracks JSONL")->required();
  fuse->add_option("--pairs", fuse_pairs, "pairs.jsonl")->required();
  fuse->add_option("--measurements", fuse_meas, "Measurement CSV")->required();
  fuse->add_option("--out", fuse_out, "Output fish CSV");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic scenario with ground truth");
  bool png_masks = false;
  simulate->add_flag("--png-masks", png_masks, "Store masks as PNG files instead of inline RLE");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a pipeline JSON config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*calibrate) {
      const auto result = sf::calibrate_files(corners, out_path(calib_out, "rig.json"));
      std::cout << sf::Json{{"stage", "calibrate"},
                            {"views", result.per_frame_board_poses.size()},
                            {"rms_px", result.rms_reprojection_error},
                            {"iterations", result.iterations},
                            {"converged", result.converged}}
                       .dump()
                << "\n";
    } else if (*rectify) {
      const sf::Provenance prov{sf::config_hash(sf::Json{{"side", rect_side}}), seed, "rectify"};
      print_report(sf::rectify_files(rect_rig, out_path(rect_out, "rectification.json"), opt_path(rect_dets),
                                     rect_side == "left" ? sf::Side::Left : sf::Side::Right, opt_path(rect_centers),
                                     prov));
    } else if (*pair) {
      sf::PairingOptions options;
      options.epipolar_delta = pair_delta;
      if (!(pair_delta > 0.0)) throw sf::Error(sf::ErrorCode::ConfigError, "--delta must be positive");
      const sf::Provenance prov{sf::config_hash(sf::Json{{"epipolar_delta_pair", pair_delta}}), seed, "pair"};
      print_report(sf::pair_files(pair_rig, pair_left, pair_right, out_path(pair_out, "pairs.jsonl"), options, prov,
                                  opt_path(pair_lf), opt_path(pair_rf)));
    } else if (*measure) {
      if (!(meas_band > 0.0)) throw sf::Error(sf::ErrorCode::ConfigError, "--band must be positive");
      const sf::Provenance prov{sf::config_hash(sf::Json{{"epipolar_band_measure", meas_band}}), seed, "measure"};
      print_report(sf::measure_files(meas_rig, meas_pairs, meas_lm, meas_rm, out_path(meas_out, "measurements.csv"),
                                     meas_band, prov));
    } else if (*track) {
      sf::TrackerConfig tc;
      if (!config.empty()) tc = sf::tracker_config_from_json(sf::read_json_file(config, true));
      const sf::Provenance prov{sf::config_hash(sf::tracker_config_to_json(tc)), seed, "track"};
      print_report(sf::track_files(track_dets, tc, out_path(track_out, "tracks.jsonl"), prov, opt_path(track_features)));
    } else if (*fuse) {
      const sf::Provenance prov{sf::config_hash(sf::Json::object()), seed, "fuse"};
      print_report(sf::fuse_files(fuse_tl, fuse_tr, fuse_pairs, fuse_meas, out_path(fuse_out, "fish.csv"), prov));
    } else if (*simulate) {
      sf::ScenarioConfig sc;
      if (!config.empty()) sc = sf::scenario_from_json(sf::read_json_file(config, true));
      if (app.count("--seed")) sc.seed = seed;
      const sf::fs::path dir = out_dir.empty() ? sf::fs::path("data") : sf::fs::path(out_dir);
      sf::write_scenario(sc, dir, png_masks ? sf::MaskStorage::Png : sf::MaskStorage::Rle);
      std::cout << sf::Json{{"stage", "simulate"}, {"out_dir", dir.string()}, {"seed", sc.seed}}.dump() << "\n";
    } else if (*run) {
      if (config.empty()) throw sf::Error(sf::ErrorCode::ConfigError, "run needs --config pipeline.json");
      sf::PipelineConfig pc = sf::load_pipeline_config(config);
      if (!out_dir.empty()) pc.out_dir = out_dir;
      if (app.count("--seed")) pc.seed = seed;
      const sf::PipelineReport report = sf::run_pipeline(pc);
      if (pc.log_level != "quiet") {
        for (const auto& s : report.stages) print_report(s);
      }
    }
  } catch (const sf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const sf::fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
