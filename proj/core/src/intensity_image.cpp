#include "ilam/intensity_image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

double row_median(const OrganizedScan& scan, int r) {
  std::vector<double> vals;
  vals.reserve(scan.cols);
  for (int c = 0; c < scan.cols; ++c) {
    const auto& p = scan.at(r, c);
    if (p.valid) vals.push_back(p.intensity);
  }
  if (vals.empty()) return 0.0;
  const size_t mid = vals.size() / 2;
  std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
  return vals[mid];
}

}  // namespace

IntensityImage project(const OrganizedScan& scan, const NormalizationParams& params) {
  if (params.cap <= 0.0) throw InvalidParam("intensity cap must be positive");

  IntensityImage img;
  img.rows = scan.rows;
  img.cols = scan.cols;
  img.pixels.assign(scan.points.size(), 0);
  img.index_map.assign(scan.points.size(), -1);

  std::vector<double> gain(scan.rows, 1.0);
  if (params.row_gain_equalize) {
    for (int r = 0; r < scan.rows; ++r) {
      const double med = row_median(scan, r);
      // median intensity maps to mid-scale before the cap is applied
      gain[r] = med > 0.0 ? (0.5 * params.cap) / med : 1.0;
    }
  }

  for (int r = 0; r < scan.rows; ++r) {
    for (int c = 0; c < scan.cols; ++c) {
      const size_t i = scan.index(r, c);
      const auto& p = scan.points[i];
      if (!p.valid) continue;
      const double v = std::clamp(p.intensity * gain[r], 0.0, params.cap);
      img.pixels[i] = static_cast<uint8_t>(std::lround(255.0 * v / params.cap));
      img.index_map[i] = static_cast<int32_t>(i);
    }
  }
  return img;
}

Eigen::Vector3d lookup_point(const IntensityImage& img, const OrganizedScan& scan, int row,
                             int col) {
  if (row < 0 || row >= img.rows || col < 0 || col >= img.cols) {
    throw InvalidInput("lookup_point: pixel out of bounds");
  }
  const int32_t idx = img.cell_index(row, col);
  if (idx < 0) throw NoReturn("no return behind pixel");
  return scan.points[static_cast<size_t>(idx)].position();
}

void write_pgm(const IntensityImage& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace ilam
