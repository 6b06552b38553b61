#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ilam/geometry.hpp"
#include "ilam/scan.hpp"
#include "ilam/scan_io.hpp"

namespace ilam::synth {

/// Textured triangle; texture maps barycentric (u, v) with
/// p = v0 + u*(v1-v0) + v*(v2-v0) to an intensity value.
struct Triangle {
  Eigen::Vector3d v0;
  Eigen::Vector3d v1;
  Eigen::Vector3d v2;
  std::function<double(double, double)> texture;
};

struct World {
  std::vector<Triangle> triangles;
  double ambient = 0.0;  // intensity floor applied to every return
};

struct SensorModel {
  int rows = 64;
  int cols = 1024;
  double vertical_fov_deg = 45.0;  // full span, symmetric about the horizon
  double range_sigma = 0.0;        // m
  double intensity_sigma = 0.0;    // intensity units
  double max_range = 50.0;         // m
};

enum class Scenario { kCorridor, kLoop, kSlope, kParking };

Scenario parse_scenario(const std::string& name);
const char* scenario_name(Scenario s);

struct SequenceOptions {
  int steps = 50;
  double step_size = 0.2;       // m per translation step
  double range_sigma = 0.01;    // m; set 0 for exactness tests
  double intensity_sigma = 2.0; // units; set 0 for exactness tests
  uint64_t seed = 7;
};

/// Seamless world-anchored gray mosaic; the value depends only on the
/// world-space cell the point falls in, so texture is viewpoint
/// consistent. Values lie in [30, 250].
double mosaic_value(const Eigen::Vector3d& p, uint64_t surface_seed, double cell_size);

/// Two triangles covering quad a-b-c-d with a shared mosaic texture.
void add_textured_quad(World& world, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                       const Eigen::Vector3d& c, const Eigen::Vector3d& d, uint64_t surface_seed,
                       double cell_size);

/// Axis-aligned box obstacle (4 side walls + top), viewed from outside.
void add_box(World& world, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
             uint64_t surface_seed, double cell_size);

/// Closed axis-aligned room (6 faces), viewed from inside.
void add_box_room(World& world, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                  uint64_t surface_seed, double cell_size);

World make_world(Scenario s, const SequenceOptions& opt);

/// Ground-truth sensor poses, one per scan. Corridor/slope/parking move
/// in straight lines; loop walks a rectangular circuit with in-place
/// corner turns and ends exactly at the starting pose.
std::vector<Se3Pose> make_trajectory(Scenario s, int steps, double step_size);

/// Casts one ray through the world; returns distance to the nearest hit
/// and fills *intensity with its texture value, or a negative distance
/// when nothing is hit within max_range.
double cast_ray(const World& world, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                double max_range, double* intensity);

/// Simulates one spin. Points are in the sensor frame; cells whose ray
/// hits nothing are invalid. Deterministic for a given seed.
OrganizedScan render_scan(const World& world, const SensorModel& sensor, const Se3Pose& pose,
                          uint64_t seed);

std::pair<std::vector<OrganizedScan>, std::vector<TrajectoryRecord>> make_sequence(
    Scenario s, const SequenceOptions& opt);

/// Renders the sequence straight to disk: scan_000000.oscn ... plus
/// groundtruth.txt, without holding all scans in memory.
void write_sequence(Scenario s, const SequenceOptions& opt, const std::filesystem::path& out_dir);

}  // namespace ilam::synth
