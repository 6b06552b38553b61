// Stage-level throughput benchmarks on rendered 64x1024 scans. The
// interesting budget is the per-scan front end, so the fixtures mirror
// the pipeline's defaults.
#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/features.hpp"
#include "ilam/ikd_tree.hpp"
#include "ilam/intensity_image.hpp"
#include "ilam/odometry.hpp"
#include "ilam/plane_extraction.hpp"
#include "ilam/synth.hpp"

namespace {

using namespace ilam;

const OrganizedScan& parking_scan(int index) {
  static const auto scans = [] {
    synth::SequenceOptions opt;
    opt.range_sigma = 0.0;
    opt.intensity_sigma = 0.0;
    const synth::World world = synth::make_world(synth::Scenario::kParking, opt);
    const auto traj = synth::make_trajectory(synth::Scenario::kParking, 4, 0.3);
    synth::SensorModel sensor;
    std::vector<OrganizedScan> out;
    for (size_t i = 0; i < traj.size(); ++i) {
      out.push_back(synth::render_scan(world, sensor, traj[i], i + 1));
    }
    return out;
  }();
  return scans[size_t(index)];
}

void bm_project(benchmark::State& state) {
  const OrganizedScan& scan = parking_scan(0);
  const NormalizationParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(project(scan, params));
  }
}
BENCHMARK(bm_project)->Unit(benchmark::kMillisecond);

void bm_make_frame(benchmark::State& state) {
  const OrganizedScan& scan = parking_scan(0);
  const Config cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(make_frame(scan, cfg));
  }
}
BENCHMARK(bm_make_frame)->Unit(benchmark::kMillisecond);

void bm_match(benchmark::State& state) {
  const Config cfg;
  const IntensityFrame a = make_frame(parking_scan(0), cfg);
  const IntensityFrame b = make_frame(parking_scan(1), cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(match(a.features, b.features, cfg.max_hamming, cfg.match_ratio));
  }
}
BENCHMARK(bm_match)->Unit(benchmark::kMicrosecond);

void bm_register_matched(benchmark::State& state) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const Se3Pose truth(Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ())),
                      Eigen::Vector3d(0.4, -0.2, 0.1));
  std::vector<Eigen::Vector3d> prev;
  std::vector<Eigen::Vector3d> curr;
  std::vector<double> scores;
  for (int i = 0; i < int(state.range(0)); ++i) {
    prev.emplace_back(u(rng), u(rng), u(rng));
    curr.push_back(transform_point(truth, prev.back()) +
                   Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.001);
    scores.push_back(1.0);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(register_matched(prev, curr, scores));
  }
}
BENCHMARK(bm_register_matched)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void bm_plane_extraction(benchmark::State& state) {
  const OrganizedScan& scan = parking_scan(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_general_planes(scan, 20));
  }
}
BENCHMARK(bm_plane_extraction)->Unit(benchmark::kMillisecond);

void bm_ground_segmentation(benchmark::State& state) {
  const OrganizedScan& scan = parking_scan(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_ground(scan, -1.0, 100));
  }
}
BENCHMARK(bm_ground_segmentation)->Unit(benchmark::kMillisecond);

void bm_ikd_insert(benchmark::State& state) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<Eigen::Vector3d> points;
  for (int i = 0; i < int(state.range(0)); ++i) points.emplace_back(u(rng), u(rng), u(rng));
  for (auto _ : state) {
    IkdTree tree;
    tree.insert(points);
    benchmark::DoNotOptimize(tree.size());
  }
}
BENCHMARK(bm_ikd_insert)->Arg(10000)->Arg(50000)->Unit(benchmark::kMillisecond);

void bm_ikd_knn(benchmark::State& state) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  IkdTree tree;
  std::vector<Eigen::Vector3d> points;
  for (int i = 0; i < 50000; ++i) points.emplace_back(u(rng), u(rng), u(rng));
  tree.insert(points);
  for (auto _ : state) {
    const Eigen::Vector3d q(u(rng), u(rng), u(rng));
    benchmark::DoNotOptimize(tree.knn(q, 5));
  }
}
BENCHMARK(bm_ikd_knn)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
