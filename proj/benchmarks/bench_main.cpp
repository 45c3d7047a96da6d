#include <benchmark/benchmark.h>

#include "stereofish/assignment.hpp"
#include "stereofish/calibration.hpp"
#include "stereofish/measurement.hpp"
#include "stereofish/random.hpp"
#include "stereofish/synthetic.hpp"
#include "stereofish/tracking.hpp"

namespace sf = stereofish;

namespace {

void BM_SolveMaxWeight(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  sf::Rng rng(1);
  sf::WeightMatrix m(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) m.set(r, c, rng.uniform());
  for (auto _ : state) benchmark::DoNotOptimize(sf::solve_max_weight(m));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveMaxWeight)->RangeMultiplier(2)->Range(16, 512)->Complexity(benchmark::oNCubed);

void BM_Triangulate(benchmark::State& state) {
  sf::SyntheticRigParams params;
  sf::StereoRig rig = sf::make_synthetic_rig(params, false);
  const sf::WorldPoint w{0.3, -0.1, 2.0};
  const sf::PixelPoint l = sf::project(w, rig.left), r = sf::project(w, rig.right);
  for (auto _ : state) benchmark::DoNotOptimize(sf::triangulate(l, r, rig.left, rig.right));
}
BENCHMARK(BM_Triangulate);

void BM_Undistort(benchmark::State& state) {
  const sf::StereoRig rig = sf::make_synthetic_rig(sf::SyntheticRigParams{});
  for (auto _ : state)
    benchmark::DoNotOptimize(sf::undistort_point({1800.0, 1000.0}, rig.left.intrinsics, rig.left.distortion));
}
BENCHMARK(BM_Undistort);

void BM_CalibrateStereo(benchmark::State& state) {
  sf::ScenarioConfig cfg;
  cfg.noise.corner_px = 0.2;
  const auto sc = sf::generate_checkerboard_observations(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(sf::calibrate_stereo(sc.views));
}
BENCHMARK(BM_CalibrateStereo)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_MeasurePair(benchmark::State& state) {
  const sf::RectifiedStereo st = sf::make_rectified(sf::make_synthetic_rig(sf::SyntheticRigParams{}, false));
  sf::SyntheticFish f;
  f.start = {0.4, 0.0, 1.5};
  const sf::BinaryMask l = sf::rasterize_conic(sf::projected_dual_conic(f, 0, st.left));
  const sf::BinaryMask r = sf::rasterize_conic(sf::projected_dual_conic(f, 0, st.right));
  for (auto _ : state) benchmark::DoNotOptimize(sf::measure_pair(l, r, st));
}
BENCHMARK(BM_MeasurePair)->Unit(benchmark::kMicrosecond);

void BM_TrackerStep(benchmark::State& state) {
  sf::ScenarioConfig cfg;
  cfg.n_fish = static_cast<int>(state.range(0));
  const sf::RectifiedStereo st = sf::make_rectified(sf::make_synthetic_rig(cfg.rig, false));
  const auto fish = sf::generate_fish(cfg);
  std::vector<std::vector<sf::DetectionRecord>> frames;
  for (int t = 0; t < cfg.n_frames; ++t) frames.push_back(sf::render_fish_frame(fish, t, st, cfg).left);
  for (auto _ : state) {
    sf::Tracker tracker;
    for (int t = 0; t < cfg.n_frames; ++t) benchmark::DoNotOptimize(tracker.step(t, frames[t]));
  }
  state.SetItemsProcessed(state.iterations() * cfg.n_frames);
}
BENCHMARK(BM_TrackerStep)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
