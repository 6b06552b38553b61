#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace ilam {

struct ScanPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  bool valid = false;

  Eigen::Vector3d position() const { return {x, y, z}; }
  double range() const { return position().norm(); }
};

/// One sensor revolution on the fixed ring x azimuth grid. Invalid cells
/// carry zeroed coordinates and intensity.
struct OrganizedScan {
  int rows = 0;  // rings
  int cols = 0;  // azimuth steps
  double timestamp = 0.0;
  std::vector<ScanPoint> points;  // rows * cols, row-major

  OrganizedScan() = default;
  OrganizedScan(int r, int c, double ts = 0.0)
      : rows(r), cols(c), timestamp(ts), points(static_cast<size_t>(r) * c) {}

  size_t index(int r, int c) const { return static_cast<size_t>(r) * cols + c; }
  ScanPoint& at(int r, int c) { return points[index(r, c)]; }
  const ScanPoint& at(int r, int c) const { return points[index(r, c)]; }

  size_t valid_count() const {
    size_t n = 0;
    for (const auto& p : points) n += p.valid ? 1 : 0;
    return n;
  }
};

}  // namespace ilam
