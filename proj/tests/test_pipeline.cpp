#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ilam/errors.hpp"
#include "ilam/evaluate.hpp"
#include "ilam/pipeline.hpp"
#include "ilam/synth.hpp"
#include "support.hpp"

using namespace ilam;
using testsupport::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

Config corridor_config() {
  Config cfg;
  cfg.height_prior = -1.0;  // corridor sensor rides 1 m above the floor
  return cfg;
}

// renders once per binary; every test shares the same read-only directory
const std::filesystem::path& corridor_dir() {
  static TempDir dir("pipeline-corridor");
  static bool rendered = false;
  if (!rendered) {
    synth::SequenceOptions opt;
    opt.steps = 12;
    opt.step_size = 0.2;
    opt.range_sigma = 0.0;
    opt.intensity_sigma = 0.0;
    opt.seed = 11;
    synth::write_sequence(synth::Scenario::kCorridor, opt, dir.path());
    rendered = true;
  }
  return dir.path();
}

void check_finite(const std::vector<TrajectoryRecord>& records) {
  for (const auto& r : records) {
    CHECK(r.pose.translation().allFinite());
    CHECK(std::isfinite(r.pose.rotation_angle()));
  }
}

bool same_poses(const std::vector<TrajectoryRecord>& a, const std::vector<TrajectoryRecord>& b,
                double tol) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].timestamp != b[i].timestamp) return false;
    if ((a[i].pose.matrix() - b[i].pose.matrix()).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("serial corridor run stays on track") {
  const RunResult res = run_directory(corridor_dir(), corridor_config());

  CHECK(res.summary.scans == 12);
  CHECK(res.odometry.size() == 12);
  CHECK(res.final_trajectory.size() == 12);
  CHECK(res.summary.keyframes >= 1);
  CHECK(res.keyframe_trajectory.size() == size_t(res.summary.keyframes));
  CHECK(res.keyframe_scans.size() == size_t(res.summary.keyframes));
  check_finite(res.odometry);
  check_finite(res.final_trajectory);
  check_finite(res.keyframe_trajectory);

  CHECK_FALSE(res.summary.loop_closure_enabled);  // no vocabulary configured
  CHECK(res.loops.empty());
  CHECK(res.summary.loops_accepted == 0);

  CHECK(res.summary.frontend.count == 12);
  CHECK(res.summary.frontend.total_ms > 0.0);
  CHECK(res.summary.mean_total_ms() > 0.0);

  CHECK_FALSE(res.map_points.empty());
  for (const auto& p : res.map_points) CHECK(p.allFinite());

  const auto gt = read_trajectory(corridor_dir() / "groundtruth.txt");
  const ApeStats ape = evaluate_ape(res.final_trajectory, gt);
  CHECK(ape.pairs == 12);
  CHECK(ape.rmse < 0.05);
}

TEST_CASE("run outputs land on disk in the documented shapes") {
  const RunResult res = run_directory(corridor_dir(), corridor_config());
  TempDir out("pipeline-out");
  write_run_outputs(res, out.path() / "run");

  const auto base = out.path() / "run";
  for (const char* name :
       {"odometry.txt", "keyframes.txt", "trajectory.txt", "map.xyz", "summary.txt"}) {
    CHECK(std::filesystem::exists(base / name));
  }

  CHECK(read_trajectory(base / "odometry.txt").size() == 12);
  CHECK(read_trajectory(base / "trajectory.txt").size() == 12);
  CHECK(read_trajectory(base / "keyframes.txt").size() == size_t(res.summary.keyframes));

  // one "x y z" line per map point
  const std::string xyz = slurp(base / "map.xyz");
  size_t lines = 0;
  for (char c : xyz) lines += c == '\n' ? 1 : 0;
  CHECK(lines == res.map_points.size());

  CHECK(slurp(base / "summary.txt") == summary_text(res.summary));
  CHECK_FALSE(summary_text(res.summary).empty());
}

TEST_CASE("serial runs are bit-identical") {
  const RunResult a = run_directory(corridor_dir(), corridor_config());
  const RunResult b = run_directory(corridor_dir(), corridor_config());

  CHECK(same_poses(a.odometry, b.odometry, 0.0));
  CHECK(same_poses(a.final_trajectory, b.final_trajectory, 0.0));
  CHECK(same_poses(a.keyframe_trajectory, b.keyframe_trajectory, 0.0));
  CHECK(a.keyframe_scans == b.keyframe_scans);
  REQUIRE(a.map_points.size() == b.map_points.size());
  for (size_t i = 0; i < a.map_points.size(); ++i) {
    CHECK(a.map_points[i] == b.map_points[i]);
  }

  TempDir out("pipeline-det");
  write_run_outputs(a, out.path() / "a");
  write_run_outputs(b, out.path() / "b");
  for (const char* name :
       {"odometry.txt", "keyframes.txt", "trajectory.txt", "map.xyz", "summary.txt"}) {
    if (std::string(name) == "summary.txt") continue;  // timings differ between runs
    CHECK(slurp(out.path() / "a" / name) == slurp(out.path() / "b" / name));
  }
}

TEST_CASE("parallel mode reproduces the serial estimate") {
  const RunResult serial = run_directory(corridor_dir(), corridor_config());
  const RunResult parallel =
      run_directory(corridor_dir(), corridor_config(), PipelineMode::kParallel);

  CHECK(parallel.summary.scans == serial.summary.scans);
  CHECK(parallel.keyframe_scans == serial.keyframe_scans);
  CHECK(same_poses(parallel.odometry, serial.odometry, 1e-12));
  CHECK(same_poses(parallel.final_trajectory, serial.final_trajectory, 1e-12));
  check_finite(parallel.final_trajectory);
}

TEST_CASE("plane-only ablation still produces finite poses") {
  Config cfg = corridor_config();
  cfg.plane_only = true;
  const RunResult res = run_directory(corridor_dir(), cfg);
  CHECK(res.summary.scans == 12);
  check_finite(res.final_trajectory);
}

TEST_CASE("a directory without scans is rejected") {
  TempDir dir("pipeline-empty");
  CHECK_THROWS_AS((void)run_directory(dir.path(), Config{}), InvalidInput);

  std::ofstream(dir.path() / "readme.txt") << "no scans here\n";
  CHECK_THROWS_AS((void)run_directory(dir.path(), Config{}), InvalidInput);
}
