#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "ilam/features.hpp"
#include "ilam/scan_io.hpp"
#include "ilam/synth.hpp"
#include "support.hpp"

using namespace ilam;
using testsupport::TempDir;

namespace {

// closest distance from p to triangle (a, b, c), Ericson-style region walk
double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();

  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }

  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

double world_distance(const synth::World& world, const Eigen::Vector3d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : world.triangles) {
    best = std::min(best, point_triangle_distance(p, tri.v0, tri.v1, tri.v2));
  }
  return best;
}

synth::SensorModel exact_sensor() {
  synth::SensorModel s;
  s.range_sigma = 0.0;
  s.intensity_sigma = 0.0;
  return s;
}

}  // namespace

TEST_CASE("rays that hit nothing leave invalid cells") {
  const synth::World empty;
  const synth::SensorModel sensor = exact_sensor();
  const OrganizedScan scan = synth::render_scan(empty, sensor, Se3Pose::identity(), 1);
  CHECK(scan.rows == sensor.rows);
  CHECK(scan.cols == sensor.cols);
  CHECK(scan.valid_count() == 0);

  double intensity = 0.0;
  CHECK(synth::cast_ray(empty, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), 50.0,
                        &intensity) < 0.0);
}

TEST_CASE("single triangle ray casting is exact") {
  synth::World world;
  synth::Triangle tri;
  tri.v0 = {-10, -10, 2};
  tri.v1 = {10, -10, 2};
  tri.v2 = {-10, 30, 2};
  tri.texture = [](double, double) { return 100.0; };
  world.triangles.push_back(tri);

  double intensity = 0.0;
  const double d =
      synth::cast_ray(world, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), 50.0, &intensity);
  CHECK(d == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(intensity == doctest::Approx(100.0).epsilon(1e-12));

  // oblique hit: direction (3,0,4)/5 reaches z=2 after travelling 2.5
  const Eigen::Vector3d oblique = Eigen::Vector3d(3, 0, 4).normalized();
  CHECK(synth::cast_ray(world, Eigen::Vector3d::Zero(), oblique, 50.0, &intensity) ==
        doctest::Approx(2.5).epsilon(1e-12));

  CHECK(synth::cast_ray(world, Eigen::Vector3d::Zero(), -Eigen::Vector3d::UnitZ(), 50.0,
                        &intensity) < 0.0);
  CHECK(synth::cast_ray(world, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), 1.5,
                        &intensity) < 0.0);  // beyond max range
}

TEST_CASE("closed room ranges match the analytic slab exit") {
  synth::World world;
  const Eigen::Vector3d lo(-3, -4, -2);
  const Eigen::Vector3d hi(5, 6, 3);
  synth::add_box_room(world, lo, hi, 77, 0.5);

  const Se3Pose pose(Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ())),
                     Eigen::Vector3d(0.5, 0.3, 0.2));
  const synth::SensorModel sensor = exact_sensor();
  const OrganizedScan scan = synth::render_scan(world, sensor, pose, 3);

  // the room surrounds the sensor, so every ray terminates
  CHECK(scan.valid_count() == size_t(sensor.rows) * size_t(sensor.cols));

  const Eigen::Matrix3d rot = pose.rotation_matrix();
  const Eigen::Vector3d origin = pose.translation();
  for (int r = 0; r < scan.rows; ++r) {
    for (int c = 0; c < scan.cols; c += 7) {
      const ScanPoint& pt = scan.at(r, c);
      REQUIRE(pt.valid);
      const double range = pt.range();
      const Eigen::Vector3d dir = rot * (pt.position() / range);

      double exit = std::numeric_limits<double>::infinity();
      for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(dir[axis]) < 1e-15) continue;
        const double face = dir[axis] > 0 ? hi[axis] : lo[axis];
        exit = std::min(exit, (face - origin[axis]) / dir[axis]);
      }
      CHECK(range == doctest::Approx(exit).epsilon(1e-9));
      CHECK(pt.intensity >= 30.0);
      CHECK(pt.intensity <= 250.0);
    }
  }
}

TEST_CASE("noise-free returns sit on world geometry") {
  synth::SequenceOptions opt;
  opt.range_sigma = 0.0;
  opt.intensity_sigma = 0.0;
  const synth::World world = synth::make_world(synth::Scenario::kCorridor, opt);
  const auto traj = synth::make_trajectory(synth::Scenario::kCorridor, 5, 0.2);
  const synth::SensorModel sensor = exact_sensor();

  const Se3Pose pose = traj[2];
  const OrganizedScan scan = synth::render_scan(world, sensor, pose, 9);
  REQUIRE(scan.valid_count() > 0);

  size_t checked = 0;
  for (size_t i = 0; i < scan.points.size(); i += 17) {
    const ScanPoint& pt = scan.points[i];
    if (!pt.valid) continue;
    const Eigen::Vector3d w = pose.rotation_matrix() * pt.position() + pose.translation();
    CHECK(world_distance(world, w) < 1e-9);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("rendering is deterministic per seed") {
  synth::SequenceOptions opt;
  const synth::World world = synth::make_world(synth::Scenario::kParking, opt);
  synth::SensorModel sensor;
  sensor.range_sigma = 0.01;
  sensor.intensity_sigma = 2.0;
  const Se3Pose pose = Se3Pose::identity();

  const OrganizedScan a = synth::render_scan(world, sensor, pose, 42);
  const OrganizedScan b = synth::render_scan(world, sensor, pose, 42);
  REQUIRE(a.points.size() == b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].x == b.points[i].x);
    CHECK(a.points[i].y == b.points[i].y);
    CHECK(a.points[i].z == b.points[i].z);
    CHECK(a.points[i].intensity == b.points[i].intensity);
    CHECK(a.points[i].valid == b.points[i].valid);
  }

  const OrganizedScan c = synth::render_scan(world, sensor, pose, 43);
  bool differs = false;
  for (size_t i = 0; i < a.points.size() && !differs; ++i) {
    differs = a.points[i].x != c.points[i].x || a.points[i].intensity != c.points[i].intensity;
  }
  CHECK(differs);
}

TEST_CASE("trajectories have the promised shape") {
  SUBCASE("corridor is a straight line") {
    const auto traj = synth::make_trajectory(synth::Scenario::kCorridor, 50, 0.2);
    REQUIRE(traj.size() == 50);
    for (size_t i = 0; i + 1 < traj.size(); ++i) {
      const double step = (traj[i + 1].translation() - traj[i].translation()).norm();
      CHECK(step == doctest::Approx(0.2).epsilon(1e-9));
      CHECK(traj[i].rotation_angle() == traj[0].rotation_angle());
    }
    const double total = (traj.back().translation() - traj.front().translation()).norm();
    CHECK(total == doctest::Approx(49 * 0.2).epsilon(1e-9));
  }

  SUBCASE("loop returns to the start") {
    const auto traj = synth::make_trajectory(synth::Scenario::kLoop, 160, 0.2);
    REQUIRE(traj.size() == 160);
    CHECK(testsupport::rotation_error(traj.front(), traj.back()) < 1e-9);
    CHECK(testsupport::translation_error(traj.front(), traj.back()) < 1e-9);
    // it actually goes somewhere before coming back
    double max_excursion = 0.0;
    for (const auto& p : traj) {
      max_excursion =
          std::max(max_excursion, (p.translation() - traj.front().translation()).norm());
    }
    CHECK(max_excursion > 2.0);
  }

  SUBCASE("all scenarios yield finite poses") {
    for (auto s : {synth::Scenario::kCorridor, synth::Scenario::kLoop, synth::Scenario::kSlope,
                   synth::Scenario::kParking}) {
      for (const auto& p : synth::make_trajectory(s, 30, 0.2)) {
        CHECK(p.translation().allFinite());
        CHECK(std::isfinite(p.rotation_angle()));
      }
    }
  }
}

TEST_CASE("mosaic texture is world-anchored and bounded") {
  std::mt19937 rng(301);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    const double v = synth::mosaic_value(p, 5, 0.5);
    CHECK(v >= 30.0);
    CHECK(v <= 250.0);
    CHECK(v == synth::mosaic_value(p, 5, 0.5));  // pure function of (p, seed, cell)
  }

  // cells are floor(v / cell + 0.31): with cell 0.5 the band
  // [-0.155, 0.345) shares one cell, so both probes land together
  CHECK(synth::mosaic_value({0.01, 0.02, 0.03}, 5, 0.5) ==
        synth::mosaic_value({0.30, -0.10, 0.15}, 5, 0.5));

  // different cells are not all equal
  bool differs = false;
  for (int i = 0; i < 100 && !differs; ++i) {
    differs = synth::mosaic_value({double(i), 0.2, 0.2}, 5, 0.5) !=
              synth::mosaic_value({double(i) + 37.0, 14.2, -3.0}, 5, 0.5);
  }
  CHECK(differs);
}

TEST_CASE("corridor scans are feature- and coverage-rich") {
  synth::SequenceOptions opt;
  opt.range_sigma = 0.0;
  opt.intensity_sigma = 0.0;
  const synth::World world = synth::make_world(synth::Scenario::kCorridor, opt);
  const auto traj = synth::make_trajectory(synth::Scenario::kCorridor, 10, 0.2);
  const synth::SensorModel sensor = exact_sensor();
  Config cfg;

  for (size_t i : {size_t(0), size_t(5), size_t(9)}) {
    const OrganizedScan scan = synth::render_scan(world, sensor, traj[i], i + 1);
    CHECK(double(scan.valid_count()) >= 0.3 * double(scan.rows) * double(scan.cols));
    const IntensityFrame frame = make_frame(scan, cfg);
    CHECK(frame.features.size() >= 100);
  }
}

TEST_CASE("sequence generation and disk export agree") {
  synth::SequenceOptions opt;
  opt.steps = 6;
  opt.step_size = 0.25;
  opt.range_sigma = 0.0;
  opt.intensity_sigma = 0.0;
  opt.seed = 5;

  const auto [scans, records] = synth::make_sequence(synth::Scenario::kCorridor, opt);
  REQUIRE(scans.size() == 6);
  REQUIRE(records.size() == 6);
  const auto traj = synth::make_trajectory(synth::Scenario::kCorridor, 6, 0.25);
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(testsupport::translation_error(records[i].pose, traj[i]) < 1e-12);
    if (i > 0) CHECK(records[i].timestamp > records[i - 1].timestamp);
  }

  TempDir dir("synth-seq");
  synth::write_sequence(synth::Scenario::kCorridor, opt, dir.path());
  for (int i = 0; i < 6; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%06d.oscn", i);
    CHECK(std::filesystem::exists(dir.path() / name));
  }
  CHECK_FALSE(std::filesystem::exists(dir.path() / "scan_000006.oscn"));

  const auto gt = read_trajectory(dir.path() / "groundtruth.txt");
  REQUIRE(gt.size() == 6);
  for (size_t i = 0; i < gt.size(); ++i) {
    CHECK(testsupport::translation_error(gt[i].pose, records[i].pose) < 1e-6);
  }

  const OrganizedScan scan0 = read_scan(dir.path() / "scan_000000.oscn");
  CHECK(scan0.rows == 64);
  CHECK(scan0.cols == 1024);
  CHECK(scan0.valid_count() > 0);

  // written cells match the in-memory render at f32 precision
  const OrganizedScan& mem0 = scans[0];
  REQUIRE(scan0.points.size() == mem0.points.size());
  for (size_t i = 0; i < scan0.points.size(); i += 101) {
    CHECK(scan0.points[i].valid == mem0.points[i].valid);
    CHECK(scan0.points[i].x == doctest::Approx(mem0.points[i].x).epsilon(1e-6));
    CHECK(scan0.points[i].intensity == doctest::Approx(mem0.points[i].intensity).epsilon(1e-6));
  }
}

TEST_CASE("scenario names round trip") {
  for (auto s : {synth::Scenario::kCorridor, synth::Scenario::kLoop, synth::Scenario::kSlope,
                 synth::Scenario::kParking}) {
    CHECK(synth::parse_scenario(synth::scenario_name(s)) == s);
  }
  CHECK_THROWS(synth::parse_scenario("nonsense"));
}
