// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stereofish/assignment.hpp"
#include "stereofish/calibration.hpp"
#include "stereofish/error.hpp"
#include "stereofish/fusion.hpp"
#include "stereofish/measurement.hpp"
#include "stereofish/pairing.hpp"
#include "stereofish/pipeline.hpp"
#include "stereofish/random.hpp"
#include "stereofish/serialization.hpp"
#include "stereofish/synthetic.hpp"
#include "stereofish/tracking.hpp"

namespace sf = stereofish;
using sf::fs::path;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [fail]");
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

sf::StereoRig pinhole_copy(sf::StereoRig rig) {
  rig.left.distortion = {};
  rig.right.distortion = {};
  return rig;
}

// --- AC1 ------------------------------------------------------------------------

Outcome calibration_loop() {
  Outcome o;
  sf::ScenarioConfig cfg;
  cfg.seed = 101;

  auto t0 = std::chrono::steady_clock::now();
  const auto clean = sf::generate_checkerboard_observations(cfg);
  const sf::CalibrationResult a = sf::calibrate_stereo(clean.views);
  const double t_clean = seconds_since(t0);
  double worst = 0.0;
  for (const auto* pair : {&a.rig.left, &a.rig.right}) {
    const sf::CameraModel& truth = pair == &a.rig.left ? clean.truth.left : clean.truth.right;
    worst = std::max({worst, rel(pair->intrinsics.fx, truth.intrinsics.fx), rel(pair->intrinsics.fy, truth.intrinsics.fy),
                      rel(pair->intrinsics.cx, truth.intrinsics.cx), rel(pair->intrinsics.cy, truth.intrinsics.cy)});
  }
  const Eigen::Vector3d rv = a.rig.relative.rotation_vector(), rv_true = clean.truth.relative.rotation_vector();
  worst = std::max(worst, (rv - rv_true).norm() / rv_true.norm());
  worst = std::max(worst, (a.rig.relative.translation() - clean.truth.relative.translation()).norm() /
                              clean.truth.relative.translation().norm());
  o.require(worst < 1e-5, "noiseless worst relative error " + fmt(worst) + " < 1e-5");

  cfg.noise.corner_px = 0.2;
  t0 = std::chrono::steady_clock::now();
  const auto noisy = sf::generate_checkerboard_observations(cfg);
  const sf::CalibrationResult b = sf::calibrate_stereo(noisy.views);
  const double t_noisy = seconds_since(t0);
  const double fx_err = std::max(rel(b.rig.left.intrinsics.fx, noisy.truth.left.intrinsics.fx),
                                 rel(b.rig.right.intrinsics.fx, noisy.truth.right.intrinsics.fx));
  o.require(fx_err < 5e-3, "0.2 px noise fx error " + fmt(100 * fx_err) + "% < 0.5%");
  o.require(b.rms_reprojection_error <= 0.35, "rms " + fmt(b.rms_reprojection_error) + " px <= 0.35");
  o.require(t_clean < 10.0 && t_noisy < 10.0, "runtime " + fmt(t_clean) + " s / " + fmt(t_noisy) + " s < 10 s");
  return o;
}

// --- AC2 ------------------------------------------------------------------------

Outcome rectification() {
  Outcome o;
  const sf::StereoRig rig = pinhole_copy(sf::make_synthetic_rig(sf::SyntheticRigParams{}));
  const sf::RectificationPair rect = sf::compute_rectification(rig);
  sf::Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const sf::WorldPoint w{rng.uniform(-1.0, 1.8), rng.uniform(-0.6, 0.6), rng.uniform(1.0, 3.0)};
    const sf::PixelPoint l = sf::rectify_point(sf::project(w, rig.left), rig.left, rect, sf::Side::Left);
    const sf::PixelPoint r = sf::rectify_point(sf::project(w, rig.right), rig.right, rect, sf::Side::Right);
    worst = std::max(worst, std::abs(l.v - r.v));
  }
  o.require(worst < 1e-9, "max |vL - vR| " + fmt(worst) + " < 1e-9");
  const Eigen::Matrix3d rel_rot = rect.rotation_right * rig.relative.rotation() * rect.rotation_left.transpose();
  const double rot_err = (rel_rot - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  o.require(rot_err < 1e-9, "rectified relative rotation deviation " + fmt(rot_err) + " < 1e-9");
  return o;
}

// --- AC3 ------------------------------------------------------------------------

Outcome triangulation() {
  Outcome o;
  const sf::StereoRig rig = pinhole_copy(sf::make_synthetic_rig(sf::SyntheticRigParams{}));
  sf::Rng rng(303);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double z = rng.uniform(0.5, 10.0);
    const sf::WorldPoint w{rng.uniform(-0.4, 0.4) * z, rng.uniform(-0.25, 0.25) * z, z};
    const sf::WorldPoint back = sf::triangulate(sf::project(w, rig.left), sf::project(w, rig.right), rig.left, rig.right);
    worst = std::max(worst, (back.vec() - w.vec()).norm());
  }
  o.require(worst < 1e-9, "round trip max error " + fmt(worst) + " m < 1e-9");

  const sf::RectifiedStereo st = sf::make_rectified(rig);
  const double f = st.left.intrinsics.fx, b = st.baseline();
  double worst_z = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(300.0, 1600.0), v = rng.uniform(100.0, 1000.0), d = rng.uniform(50.0, 600.0);
    const sf::WorldPoint w = sf::triangulate({u, v}, {u - d, v}, st.left, st.right);
    worst_z = std::max(worst_z, std::abs(w.z - f * b / d));
  }
  o.require(worst_z < 1e-9, "disparity depth max error " + fmt(worst_z) + " m < 1e-9");
  return o;
}

// --- AC4 ------------------------------------------------------------------------

Outcome hungarian() {
  Outcome o;
  sf::Rng rng(404);
  int agree = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 7));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, 7));
    const double p = rng.uniform(0.0, 0.4);
    sf::WeightMatrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        m.set(r, c, rng.uniform(-1.0, 1.0));
        if (rng.bernoulli(p)) m.forbid(r, c);
      }
    const sf::Matching a = sf::solve_max_weight(m);
    const sf::Matching b = sf::brute_force_assignment(m);
    if (a.pairs == b.pairs && std::abs(a.objective - b.objective) < 1e-9) ++agree;
  }
  const double t_small = seconds_since(t0);
  o.require(agree == 1000, std::to_string(agree) + "/1000 agree with exhaustive search");
  o.require(t_small < 5.0, "1000 instances in " + fmt(t_small) + " s < 5 s");

  sf::WeightMatrix big(500, 500);
  for (std::size_t r = 0; r < 500; ++r)
    for (std::size_t c = 0; c < 500; ++c) big.set(r, c, rng.uniform());
  const auto t1 = std::chrono::steady_clock::now();
  const sf::Matching res = sf::solve_max_weight(big);
  const double t_big = seconds_since(t1);
  o.require(res.pairs.size() == 500 && t_big < 1.0, "500x500 in " + fmt(t_big) + " s < 1 s");
  return o;
}

// --- AC5 ------------------------------------------------------------------------

double pairing_accuracy(double feature_std) {
  std::size_t correct = 0, total = 0;
  for (int i = 0; i < 500; ++i) {
    sf::ScenarioConfig cfg;
    cfg.n_fish = 2 + i % 9;
    cfg.seed = 5000 + static_cast<std::uint64_t>(i);
    cfg.noise.feature_std = feature_std;
    const sf::RectifiedStereo st = sf::make_rectified(sf::make_synthetic_rig(cfg.rig, false));
    const auto fish = sf::generate_fish(cfg);
    const sf::RenderedFrame fr = sf::render_fish_frame(fish, (i * 37) % cfg.n_frames, st, cfg);
    const sf::FramePairing p = sf::pair_frame(fr.left, fr.right, st);
    std::set<std::pair<int, int>> truth(fr.true_pairs.begin(), fr.true_pairs.end());
    for (const auto& pr : p.pairs) correct += truth.count({pr.left_id, pr.right_id});
    total += std::max(truth.size(), p.pairs.size());
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
}

Outcome stereo_pairing() {
  Outcome o;
  for (double s : {0.0, 0.05}) {
    const double acc = pairing_accuracy(s);
    o.require(acc == 1.0, "sigma " + fmt(s) + ": " + fmt(100 * acc, 5) + "% == 100%");
  }
  const double acc = pairing_accuracy(0.2);
  o.require(acc >= 0.95, "sigma 0.2: " + fmt(100 * acc, 5) + "% >= 95%");
  return o;
}

// --- AC6 ------------------------------------------------------------------------

Outcome measurement() {
  Outcome o;
  const sf::RectifiedStereo st = sf::make_rectified(sf::make_synthetic_rig(sf::SyntheticRigParams{}, false));
  sf::Rng rng(606);
  double worst_clean = 0.0, worst_dilated = 0.0;
  int measured = 0, failures = 0;
  for (int i = 0; i < 200; ++i) {
    sf::SyntheticFish f;
    f.fork_length_m = 0.30;
    f.height_m = 0.30 * rng.uniform(0.22, 0.30);
    const double z = rng.uniform(1.0, 3.0);
    // lateral position inside the common field of view at this depth
    f.start = {0.4 + rng.uniform(-0.15, 0.15) * z, rng.uniform(-0.2, 0.2) * z, z};
    f.orientation = (Eigen::AngleAxisd(rng.uniform(-0.4, 0.4), Eigen::Vector3d::UnitY()) *
                     Eigen::AngleAxisd(rng.uniform(-0.2, 0.2), Eigen::Vector3d::UnitZ()) *
                     Eigen::AngleAxisd(rng.uniform(-0.3, 0.3), Eigen::Vector3d::UnitX()))
                        .toRotationMatrix();
    const sf::BinaryMask l = sf::rasterize_conic(sf::projected_dual_conic(f, 0, st.left));
    const sf::BinaryMask r = sf::rasterize_conic(sf::projected_dual_conic(f, 0, st.right));
    try {
      const double clean = sf::measure_pair(l, r, st).fork_length_m;
      const double dil = sf::measure_pair(l.dilated(1), r.dilated(1), st).fork_length_m;
      worst_clean = std::max(worst_clean, std::abs(clean - 0.30) / 0.30);
      worst_dilated = std::max(worst_dilated, std::abs(dil - 0.30) / 0.30);
      ++measured;
    } catch (const sf::Error&) {
      ++failures;
    }
  }
  o.require(failures == 0, std::to_string(measured) + "/200 poses measured");
  o.require(worst_clean < 0.02, "noiseless max error " + fmt(100 * worst_clean) + "% < 2%");
  o.require(worst_dilated < 0.05, "1 px dilation max error " + fmt(100 * worst_dilated) + "% < 5%");
  return o;
}

// --- AC7 ------------------------------------------------------------------------

Outcome tracking() {
  Outcome o;
  int switches = 0, coverage_fail = 0, late = 0, early_confirm = 0, gallery_over = 0, fish_total = 0;
  int worst_first = 0;
  for (int s = 0; s < 10; ++s) {
    sf::ScenarioConfig cfg;
    cfg.n_fish = 3;
    cfg.n_frames = 100;
    cfg.seed = 7000 + static_cast<std::uint64_t>(s);
    cfg.noise.drop_probability = 0.1;
    const sf::RectifiedStereo st = sf::make_rectified(sf::make_synthetic_rig(cfg.rig, false));
    const auto fish = sf::generate_fish(cfg);

    for (sf::Side side : {sf::Side::Left, sf::Side::Right}) {
      sf::Tracker tracker;
      std::map<int, std::set<int>> tracks_of_fish, fish_of_track;
      std::map<int, int> first_seen, first_confirmed;
      std::map<int, std::vector<std::pair<int, bool>>> history;  // track -> (frame, had detection) before confirmation
      std::map<int, int> confirm_frame;
      for (int frame = 0; frame < cfg.n_frames; ++frame) {
        const sf::RenderedFrame fr = sf::render_fish_frame(fish, frame, st, cfg);
        const auto& dets = side == sf::Side::Left ? fr.left : fr.right;
        const auto& owners = side == sf::Side::Left ? fr.left_fish : fr.right_fish;
        std::map<int, int> fish_of_det;
        for (std::size_t i = 0; i < dets.size(); ++i) fish_of_det[dets[i].id] = owners[i];
        for (int fid : owners) first_seen.emplace(fid, frame);
        for (const auto& r : tracker.step(frame, dets)) {
          if (r.stage == sf::TrackStage::Confirmed) {
            confirm_frame.emplace(r.track_id, frame);
            if (r.det_id) {
              const int fid = fish_of_det.at(*r.det_id);
              tracks_of_fish[fid].insert(r.track_id);
              fish_of_track[r.track_id].insert(fid);
              first_confirmed.emplace(fid, frame);
            }
          } else if (!confirm_frame.count(r.track_id)) {
            history[r.track_id].emplace_back(frame, r.det_id.has_value());
          }
        }
        for (const auto& t : tracker.tracks()) gallery_over += t.gallery.size() > 100;
      }
      // confirmation only after three consecutive matched frames following the spawn frame
      for (const auto& [tid, cf] : confirm_frame) {
        const auto& h = history[tid];
        bool ok = h.size() >= 3;
        for (std::size_t k = 0; ok && k < h.size(); ++k) ok = h[k].second && h[k].first == h[0].first + static_cast<int>(k);
        if (!(ok && cf == h[0].first + static_cast<int>(h.size()))) ++early_confirm;
      }
      for (const auto& [tid, fids] : fish_of_track) switches += fids.size() > 1;
      for (const auto& [fid, start] : first_seen) {
        ++fish_total;
        const auto it = tracks_of_fish.find(fid);
        if (it == tracks_of_fish.end() || it->second.size() != 1) {
          ++coverage_fail;
          if (it != tracks_of_fish.end()) switches += static_cast<int>(it->second.size()) - 1;
          continue;
        }
        worst_first = std::max(worst_first, first_confirmed.at(fid));
        if (first_confirmed.at(fid) > 5 + start) ++late;
      }
    }
  }
  o.require(switches == 0, std::to_string(switches) + " identity switches");
  o.require(coverage_fail == 0,
            std::to_string(fish_total - coverage_fail) + "/" + std::to_string(fish_total) +
                " fish-camera tracks covered by exactly one confirmed track");
  o.require(late == 0, std::to_string(late) + " fish confirmed after frame 5 (latest first confirmation: frame " +
                           std::to_string(worst_first) + ")");
  o.require(early_confirm == 0, std::to_string(early_confirm) + " tracks confirmed without 3 consecutive matches");
  o.require(gallery_over == 0, "gallery above 100 entries " + std::to_string(gallery_over) + " times");
  return o;
}

// --- AC8 ------------------------------------------------------------------------

Outcome fusion(const path& work) {
  Outcome o;
  int fish_ok = 0, fish_total = 0, species_ok = 0;
  double worst_len = 0.0;
  for (int s = 0; s < 10; ++s) {
    sf::ScenarioConfig cfg;
    cfg.seed = 8000 + static_cast<std::uint64_t>(s);
    cfg.noise.feature_std = 0.05;
    cfg.noise.mask_dilation_px = 1;
    cfg.noise.drop_probability = 0.05;
    const path dir = work / ("ac8_" + std::to_string(s));
    sf::fs::remove_all(dir);
    sf::write_scenario(cfg, dir);
    const sf::PipelineConfig pc = sf::load_pipeline_config(dir / "pipeline.json");
    sf::run_pipeline(pc);

    const auto tl = sf::read_tracks(pc.out_dir / "tracksL.jsonl");
    const auto tr = sf::read_tracks(pc.out_dir / "tracksR.jsonl");
    const auto pairs = sf::read_pairs(pc.out_dir / "pairs.jsonl");
    const auto meas = sf::read_measurements(pc.out_dir / "measurements.csv");
    const auto fused = sf::fuse_records(tl, tr, pairs, meas);

    const sf::Json truth = sf::read_json_file(dir / "truth.json");
    std::map<std::pair<int, int>, int> left_owner;  // (frame, det id) -> fish
    for (const auto& fr : truth["frames"])
      for (const auto& e : fr["left"]) left_owner[{fr["frame"].get<int>(), e[0].get<int>()}] = e[1].get<int>();
    std::map<int, std::pair<int, double>> truth_fish;  // identity -> (species, length)
    for (const auto& f : truth["fish"])
      truth_fish[f["identity"].get<int>()] = {f["species"].get<int>(), f["fork_length_m"].get<double>()};

    std::map<int, std::map<int, int>> votes;  // left track -> fish -> count
    for (const auto& r : tl)
      if (r.det_id) ++votes[r.track_id][left_owner.at({r.frame, *r.det_id})];

    std::set<int> covered;
    for (const auto& rec : fused) {
      if (!rec.left_track_id || !rec.right_track_id || !rec.fork_length_m) continue;
      const auto& v = votes[*rec.left_track_id];
      const int owner =
          std::max_element(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
      const auto [species, length] = truth_fish.at(owner);
      const bool sp = rec.species && *rec.species == species;
      const double err = std::abs(*rec.fork_length_m - length) / length;
      worst_len = std::max(worst_len, err);
      species_ok += sp;
      if (sp && err < 0.03) covered.insert(owner);
      ++fish_total;
    }
    fish_ok += static_cast<int>(covered.size());
    o.require(covered.size() == truth_fish.size(), "seed " + std::to_string(cfg.seed) + ": " +
                                                       std::to_string(covered.size()) + "/" +
                                                       std::to_string(truth_fish.size()) + " fish recovered");
  }
  o.require(species_ok == fish_total, "species correct on " + std::to_string(species_ok) + "/" +
                                          std::to_string(fish_total) + " fused stereo records");
  o.require(worst_len < 0.03, "max fork length error " + fmt(100 * worst_len) + "% < 3%");

  // belief argmax under shuffled accumulation order
  sf::Rng rng(808);
  std::vector<std::vector<sf::ClassScore>> history;
  for (int i = 0; i < 200; ++i) {
    std::vector<sf::ClassScore> top5;
    for (int k = 0; k < 5; ++k) top5.push_back({static_cast<int>(rng.uniform_int(0, 11)), 0.2 * (5 - k) * rng.uniform()});
    std::sort(top5.begin(), top5.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    history.push_back(top5);
  }
  const auto reference = sf::accumulate_belief(history).argmax();
  int stable = 0;
  for (int t = 0; t < 100; ++t) {
    rng.shuffle(std::span<std::vector<sf::ClassScore>>(history));
    stable += sf::accumulate_belief(history).argmax() == reference;
  }
  o.require(stable == 100, "belief argmax unchanged under " + std::to_string(stable) + "/100 shuffles");
  return o;
}

// --- AC9 ------------------------------------------------------------------------

int run_command(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const path& cli, const path& work) {
  Outcome o;
  const path dir = work / "ac9";
  sf::fs::remove_all(dir);
  const std::string exe = "\"" + cli.string() + "\"";
  o.require(run_command(exe + " simulate --seed 9 --out-dir \"" + (dir / "data").string() + "\"") == 0, "simulate exit 0");
  const std::string cfg = "\"" + (dir / "data" / "pipeline.json").string() + "\"";
  o.require(run_command(exe + " run --config " + cfg + " --out-dir \"" + (dir / "a").string() + "\"") == 0, "run #1 exit 0");
  o.require(run_command(exe + " run --config " + cfg + " --out-dir \"" + (dir / "b").string() + "\"") == 0, "run #2 exit 0");
  int identical = 0, files = 0;
  if (sf::fs::exists(dir / "a")) {
    for (const auto& e : sf::fs::directory_iterator(dir / "a")) {
      ++files;
      const path other = dir / "b" / e.path().filename();
      identical += sf::fs::exists(other) && slurp(e.path()) == slurp(other);
    }
  }
  o.require(files == 6 && identical == files,
            std::to_string(identical) + "/" + std::to_string(files) + " artifacts byte-identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereofish acceptance suite"};
  std::string cli_path, work_dir = "acceptance_work";
  app.add_option("--cli", cli_path, "stereofish executable")->required();
  app.add_option("--work-dir", work_dir, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  const path work = work_dir;
  sf::fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 calibration loop", calibration_loop},
      {"AC2 rectification", rectification},
      {"AC3 triangulation", triangulation},
      {"AC4 assignment", hungarian},
      {"AC5 stereo pairing", stereo_pairing},
      {"AC6 measurement", measurement},
      {"AC7 tracking", tracking},
      {"AC8 fusion end-to-end", [&] { return fusion(work); }},
      {"AC9 determinism", [&] { return determinism(cli_path, work); }},
  };

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt(seconds_since(t0)) << " s): " << o.detail.str()
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
