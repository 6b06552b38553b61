#include "ilam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ilam/errors.hpp"

namespace ilam::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Möller-Trumbore, double sided. Returns t > eps or -1.
double ray_triangle(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Triangle& tri,
                    double* u_out, double* v_out) {
  const Eigen::Vector3d e1 = tri.v1 - tri.v0;
  const Eigen::Vector3d e2 = tri.v2 - tri.v0;
  const Eigen::Vector3d pvec = d.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-12) return -1.0;
  const double inv_det = 1.0 / det;
  const Eigen::Vector3d tvec = o - tri.v0;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Eigen::Vector3d qvec = tvec.cross(e1);
  const double v = d.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  const double t = e2.dot(qvec) * inv_det;
  if (t < 1e-9) return -1.0;
  *u_out = u;
  *v_out = v;
  return t;
}

void push_mosaic_triangle(World& world, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                          const Eigen::Vector3d& c, uint64_t surface_seed, double cell_size) {
  Triangle tri;
  tri.v0 = a;
  tri.v1 = b;
  tri.v2 = c;
  tri.texture = [a, b, c, surface_seed, cell_size](double u, double v) {
    const Eigen::Vector3d p = a + u * (b - a) + v * (c - a);
    return mosaic_value(p, surface_seed, cell_size);
  };
  world.triangles.push_back(std::move(tri));
}

Se3Pose yaw_pose(double x, double y, double z, double yaw) {
  Eigen::Quaterniond q(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
  return Se3Pose(q, Eigen::Vector3d(x, y, z));
}

std::vector<Se3Pose> straight_line(int steps, double step_size, const Eigen::Vector3d& start,
                                   const Eigen::Vector3d& dir, const Eigen::Quaterniond& q) {
  std::vector<Se3Pose> poses;
  poses.reserve(size_t(steps));
  for (int i = 0; i < steps; ++i) {
    poses.emplace_back(q, start + double(i) * step_size * dir);
  }
  return poses;
}

}  // namespace

double mosaic_value(const Eigen::Vector3d& p, uint64_t surface_seed, double cell_size) {
  // 0.31 cell offset keeps axis-aligned surfaces away from cell
  // boundaries, so the tiny numeric jitter in hit points cannot flip
  // the cell a surface point lands in.
  auto cell = [cell_size](double v) {
    return uint64_t(int64_t(std::floor(v / cell_size + 0.31)));
  };
  uint64_t h = surface_seed;
  h = splitmix64(h ^ cell(p.x()));
  h = splitmix64(h ^ cell(p.y()));
  h = splitmix64(h ^ cell(p.z()));
  return 30.0 + double(h % 221);
}

void add_textured_quad(World& world, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                       const Eigen::Vector3d& c, const Eigen::Vector3d& d, uint64_t surface_seed,
                       double cell_size) {
  push_mosaic_triangle(world, a, b, c, surface_seed, cell_size);
  push_mosaic_triangle(world, a, c, d, surface_seed, cell_size);
}

void add_box(World& world, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
             uint64_t surface_seed, double cell_size) {
  const Eigen::Vector3d v000(lo.x(), lo.y(), lo.z()), v100(hi.x(), lo.y(), lo.z());
  const Eigen::Vector3d v010(lo.x(), hi.y(), lo.z()), v110(hi.x(), hi.y(), lo.z());
  const Eigen::Vector3d v001(lo.x(), lo.y(), hi.z()), v101(hi.x(), lo.y(), hi.z());
  const Eigen::Vector3d v011(lo.x(), hi.y(), hi.z()), v111(hi.x(), hi.y(), hi.z());
  add_textured_quad(world, v000, v100, v101, v001, splitmix64(surface_seed ^ 1), cell_size);
  add_textured_quad(world, v110, v010, v011, v111, splitmix64(surface_seed ^ 2), cell_size);
  add_textured_quad(world, v000, v001, v011, v010, splitmix64(surface_seed ^ 3), cell_size);
  add_textured_quad(world, v100, v110, v111, v101, splitmix64(surface_seed ^ 4), cell_size);
  add_textured_quad(world, v001, v101, v111, v011, splitmix64(surface_seed ^ 5), cell_size);
}

void add_box_room(World& world, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                  uint64_t surface_seed, double cell_size) {
  add_box(world, lo, hi, surface_seed, cell_size);
  const Eigen::Vector3d v000(lo.x(), lo.y(), lo.z()), v100(hi.x(), lo.y(), lo.z());
  const Eigen::Vector3d v010(lo.x(), hi.y(), lo.z()), v110(hi.x(), hi.y(), lo.z());
  add_textured_quad(world, v000, v100, v110, v010, splitmix64(surface_seed ^ 6), cell_size);
}

Scenario parse_scenario(const std::string& name) {
  if (name == "corridor") return Scenario::kCorridor;
  if (name == "loop") return Scenario::kLoop;
  if (name == "slope") return Scenario::kSlope;
  if (name == "parking") return Scenario::kParking;
  throw InvalidParam("unknown scenario '" + name + "'");
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kCorridor: return "corridor";
    case Scenario::kLoop: return "loop";
    case Scenario::kSlope: return "slope";
    case Scenario::kParking: return "parking";
  }
  return "?";
}

namespace {

// Loop circuit layout shared by the world and the trajectory: rectangle
// half-extents derived from the step budget, 3 m wide hall.
struct LoopLayout {
  double hx = 0.0;
  double hy = 0.0;
  int kx = 0;            // translation steps per x edge
  int ky = 0;            // translation steps per y edge
  int last_turn = 3;     // substeps of the 4th corner turn
};

LoopLayout loop_layout(int steps, double step_size) {
  LoopLayout lay;
  int motion = steps - 1;
  int turns = 12;  // 3 substeps per corner
  int trans = motion - turns;
  if (trans < 8) throw InvalidParam("loop scenario needs more steps");
  if (trans % 2 != 0) {
    lay.last_turn = 4;  // absorb parity in the final corner
    --trans;
  }
  const int half = trans / 2;
  lay.kx = std::max(2, int(std::lround(double(half) * 14.0 / 24.0)));
  lay.ky = half - lay.kx;
  if (lay.ky < 2) {
    lay.ky = 2;
    lay.kx = half - 2;
  }
  lay.hx = 0.5 * double(lay.kx) * step_size;
  lay.hy = 0.5 * double(lay.ky) * step_size;
  return lay;
}

}  // namespace

std::vector<Se3Pose> make_trajectory(Scenario s, int steps, double step_size) {
  if (steps < 2) throw InvalidParam("sequence needs at least 2 steps");
  if (step_size <= 0.0) throw InvalidParam("step_size must be positive");
  switch (s) {
    case Scenario::kCorridor:
    case Scenario::kParking:
      return straight_line(steps, step_size, Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitX(),
                           Eigen::Quaterniond::Identity());
    case Scenario::kSlope: {
      const double tilt = 10.0 * kPi / 180.0;
      const Eigen::Vector3d dir(std::cos(tilt), 0.0, std::sin(tilt));
      const Eigen::Vector3d normal(-std::sin(tilt), 0.0, std::cos(tilt));
      const Eigen::Quaterniond q(Eigen::AngleAxisd(-tilt, Eigen::Vector3d::UnitY()));
      return straight_line(steps, step_size, normal, dir, q);
    }
    case Scenario::kLoop: {
      const LoopLayout lay = loop_layout(steps, step_size);
      std::vector<Se3Pose> poses;
      poses.reserve(size_t(steps));
      double x = -lay.hx, y = -lay.hy, yaw = 0.0;
      poses.push_back(yaw_pose(x, y, 1.0, yaw));
      auto edge = [&](int n, double dx, double dy) {
        for (int i = 0; i < n; ++i) {
          x += dx * step_size;
          y += dy * step_size;
          poses.push_back(yaw_pose(x, y, 1.0, yaw));
        }
      };
      auto turn = [&](int n) {
        for (int i = 0; i < n; ++i) {
          yaw += 0.5 * kPi / double(n);
          poses.push_back(yaw_pose(x, y, 1.0, yaw));
        }
      };
      edge(lay.kx, 1, 0);
      turn(3);
      edge(lay.ky, 0, 1);
      turn(3);
      edge(lay.kx, -1, 0);
      turn(3);
      edge(lay.ky, 0, -1);
      turn(lay.last_turn);
      return poses;
    }
  }
  throw InvalidParam("unknown scenario");
}

World make_world(Scenario s, const SequenceOptions& opt) {
  World world;
  const uint64_t seed = splitmix64(opt.seed ^ 0xA11CEull);
  const double wall_cell = 0.15;
  const double floor_cell = 0.2;
  switch (s) {
    case Scenario::kCorridor: {
      // Two walls, floor, ceiling; ends stay open so the along-corridor
      // direction is geometrically unconstrained.
      const double length = double(opt.steps - 1) * opt.step_size;
      const double x0 = -5.0, x1 = length + 15.0;
      const double hw = 2.0, hz = 3.0;
      add_textured_quad(world, {x0, -hw, 0}, {x1, -hw, 0}, {x1, -hw, hz}, {x0, -hw, hz},
                        splitmix64(seed ^ 11), wall_cell);
      add_textured_quad(world, {x0, hw, 0}, {x1, hw, 0}, {x1, hw, hz}, {x0, hw, hz},
                        splitmix64(seed ^ 12), wall_cell);
      add_textured_quad(world, {x0, -hw, 0}, {x1, -hw, 0}, {x1, hw, 0}, {x0, hw, 0},
                        splitmix64(seed ^ 13), floor_cell);
      add_textured_quad(world, {x0, -hw, hz}, {x1, -hw, hz}, {x1, hw, hz}, {x0, hw, hz},
                        splitmix64(seed ^ 14), floor_cell);
      break;
    }
    case Scenario::kLoop: {
      const LoopLayout lay = loop_layout(opt.steps, opt.step_size);
      const double ox = lay.hx + 1.5, oy = lay.hy + 1.5;  // outer walls
      const double ix = lay.hx - 1.5, iy = lay.hy - 1.5;  // inner block
      const double hz = 4.0;
      // Outer shell: inside of a closed box minus its floor/ceiling.
      add_textured_quad(world, {-ox, -oy, 0}, {ox, -oy, 0}, {ox, -oy, hz}, {-ox, -oy, hz},
                        splitmix64(seed ^ 21), wall_cell);
      add_textured_quad(world, {-ox, oy, 0}, {ox, oy, 0}, {ox, oy, hz}, {-ox, oy, hz},
                        splitmix64(seed ^ 22), wall_cell);
      add_textured_quad(world, {-ox, -oy, 0}, {-ox, oy, 0}, {-ox, oy, hz}, {-ox, -oy, hz},
                        splitmix64(seed ^ 23), wall_cell);
      add_textured_quad(world, {ox, -oy, 0}, {ox, oy, 0}, {ox, oy, hz}, {ox, -oy, hz},
                        splitmix64(seed ^ 24), wall_cell);
      add_textured_quad(world, {-ox, -oy, 0}, {ox, -oy, 0}, {ox, oy, 0}, {-ox, oy, 0},
                        splitmix64(seed ^ 25), floor_cell);
      add_textured_quad(world, {-ox, -oy, hz}, {ox, -oy, hz}, {ox, oy, hz}, {-ox, oy, hz},
                        splitmix64(seed ^ 26), floor_cell);
      if (ix > 0.5 && iy > 0.5) {
        add_box(world, {-ix, -iy, 0}, {ix, iy, hz}, splitmix64(seed ^ 27), wall_cell);
      }
      break;
    }
    case Scenario::kSlope: {
      const double tilt = 10.0 * kPi / 180.0;
      const double length = double(opt.steps - 1) * opt.step_size;
      const double s0 = -10.0, s1 = length + 15.0, hw = 12.0;
      auto ground = [&](double along, double across) {
        return Eigen::Vector3d(along * std::cos(tilt), across, along * std::sin(tilt));
      };
      add_textured_quad(world, ground(s0, -hw), ground(s1, -hw), ground(s1, hw), ground(s0, hw),
                        splitmix64(seed ^ 31), floor_cell);
      std::mt19937_64 rng(splitmix64(seed ^ 32));
      std::uniform_real_distribution<double> side(2.5, 5.0);
      std::uniform_real_distribution<double> size(0.6, 1.4);
      for (int i = 0; i < 10; ++i) {
        const double along = s0 + 4.0 + double(i) * (s1 - s0 - 8.0) / 9.0;
        const double across = (i % 2 == 0 ? 1.0 : -1.0) * side(rng);
        const double sx = size(rng), sy = size(rng), sz = 1.0 + size(rng);
        const Eigen::Vector3d base = ground(along, across);
        add_box(world, base - Eigen::Vector3d(sx / 2, sy / 2, 0.2),
                base + Eigen::Vector3d(sx / 2, sy / 2, sz), splitmix64(seed ^ (100 + i)),
                wall_cell);
      }
      break;
    }
    case Scenario::kParking: {
      const double length = double(opt.steps - 1) * opt.step_size;
      const double x0 = -10.0, x1 = length + 15.0, hw = 15.0;
      add_textured_quad(world, {x0, -hw, 0}, {x1, -hw, 0}, {x1, hw, 0}, {x0, hw, 0},
                        splitmix64(seed ^ 41), floor_cell);
      std::mt19937_64 rng(splitmix64(seed ^ 42));
      std::uniform_real_distribution<double> jitter(-0.4, 0.4);
      int idx = 0;
      for (double cx = x0 + 5.0; cx < x1 - 4.0; cx += 5.0) {
        for (double cy : {-6.0, -3.0, 3.0, 6.0}) {
          if (((idx++) % 3) == 2) continue;  // leave some stalls empty
          const double bx = cx + jitter(rng), by = cy + jitter(rng);
          add_box(world, {bx - 2.1, by - 0.9, 0.0}, {bx + 2.1, by + 0.9, 1.5},
                  splitmix64(seed ^ (200 + idx)), wall_cell);
        }
      }
      break;
    }
  }
  return world;
}

double cast_ray(const World& world, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                double max_range, double* intensity) {
  double best_t = -1.0;
  double best_u = 0.0, best_v = 0.0;
  const Triangle* best_tri = nullptr;
  for (const auto& tri : world.triangles) {
    double u = 0.0, v = 0.0;
    const double t = ray_triangle(origin, dir, tri, &u, &v);
    if (t > 0.0 && t <= max_range && (best_t < 0.0 || t < best_t)) {
      best_t = t;
      best_u = u;
      best_v = v;
      best_tri = &tri;
    }
  }
  if (!best_tri) return -1.0;
  double value = best_tri->texture ? best_tri->texture(best_u, best_v) : 0.0;
  *intensity = std::max(value, world.ambient);
  return best_t;
}

OrganizedScan render_scan(const World& world, const SensorModel& sensor, const Se3Pose& pose,
                          uint64_t seed) {
  if (sensor.rows <= 0 || sensor.cols <= 0) throw InvalidParam("sensor grid must be positive");
  if (sensor.range_sigma < 0.0 || sensor.intensity_sigma < 0.0) {
    throw InvalidParam("sensor noise sigma must be non-negative");
  }
  OrganizedScan scan(sensor.rows, sensor.cols);
  const Eigen::Matrix3d R = pose.rotation_matrix();
  const Eigen::Vector3d origin = pose.translation();
  const double fov = sensor.vertical_fov_deg * kPi / 180.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> range_noise(0.0, 1.0);
  std::normal_distribution<double> intensity_noise(0.0, 1.0);
  for (int r = 0; r < sensor.rows; ++r) {
    const double elev = 0.5 * fov - double(r) * fov / double(sensor.rows - 1);
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int c = 0; c < sensor.cols; ++c) {
      const double az = 2.0 * kPi * (double(c) + 0.5) / double(sensor.cols) - kPi;
      const Eigen::Vector3d dir_s(ce * std::cos(az), ce * std::sin(az), se);
      double value = 0.0;
      const double t = cast_ray(world, origin, R * dir_s, sensor.max_range, &value);
      auto& cell = scan.at(r, c);
      if (t < 0.0) continue;  // constructor leaves cells invalid
      double range = t;
      if (sensor.range_sigma > 0.0) range += sensor.range_sigma * range_noise(rng);
      if (sensor.intensity_sigma > 0.0) value += sensor.intensity_sigma * intensity_noise(rng);
      if (range <= 0.0) continue;
      const Eigen::Vector3d p = range * dir_s;
      cell.x = p.x();
      cell.y = p.y();
      cell.z = p.z();
      cell.intensity = std::max(0.0, value);
      cell.valid = true;
    }
  }
  return scan;
}

std::pair<std::vector<OrganizedScan>, std::vector<TrajectoryRecord>> make_sequence(
    Scenario s, const SequenceOptions& opt) {
  const World world = make_world(s, opt);
  const std::vector<Se3Pose> poses = make_trajectory(s, opt.steps, opt.step_size);
  SensorModel sensor;
  sensor.range_sigma = opt.range_sigma;
  sensor.intensity_sigma = opt.intensity_sigma;
  std::vector<OrganizedScan> scans;
  std::vector<TrajectoryRecord> gt;
  scans.reserve(poses.size());
  gt.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) {
    OrganizedScan scan = render_scan(world, sensor, poses[i], splitmix64(opt.seed + i));
    const double ts = 0.1 * double(i);
    scan.timestamp = ts;
    scans.push_back(std::move(scan));
    gt.push_back({ts, poses[i]});
  }
  return {std::move(scans), std::move(gt)};
}

void write_sequence(Scenario s, const SequenceOptions& opt, const std::filesystem::path& out_dir) {
  const World world = make_world(s, opt);
  const std::vector<Se3Pose> poses = make_trajectory(s, opt.steps, opt.step_size);
  SensorModel sensor;
  sensor.range_sigma = opt.range_sigma;
  sensor.intensity_sigma = opt.intensity_sigma;
  std::filesystem::create_directories(out_dir);
  std::vector<TrajectoryRecord> gt;
  gt.reserve(poses.size());
  char name[32];
  for (size_t i = 0; i < poses.size(); ++i) {
    OrganizedScan scan = render_scan(world, sensor, poses[i], splitmix64(opt.seed + i));
    scan.timestamp = 0.1 * double(i);
    std::snprintf(name, sizeof(name), "scan_%06zu.oscn", i);
    write_scan(scan, out_dir / name);
    gt.push_back({scan.timestamp, poses[i]});
  }
  write_trajectory(gt, out_dir / "groundtruth.txt");
}

}  // namespace ilam::synth
