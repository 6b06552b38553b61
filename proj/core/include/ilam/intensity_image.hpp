#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ilam/scan.hpp"

namespace ilam {

struct NormalizationParams {
  double cap = 512.0;           // intensity mapped to 255
  bool row_gain_equalize = false;
};

/// 8-bit image on the scan grid plus a per-pixel back-reference into the
/// scan. index_map holds the flat scan cell index, or -1 where the cell
/// is invalid (those pixels are 0).
struct IntensityImage {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> pixels;
  std::vector<int32_t> index_map;

  uint8_t pixel(int r, int c) const { return pixels[static_cast<size_t>(r) * cols + c]; }
  int32_t cell_index(int r, int c) const { return index_map[static_cast<size_t>(r) * cols + c]; }
};

/// pixel = round(255 * clamp(intensity, 0, cap) / cap) on valid cells.
/// With row_gain_equalize, each ring is first divided by its median
/// intensity and rescaled to cap/2 to cancel ring-to-ring gain stripes.
IntensityImage project(const OrganizedScan& scan, const NormalizationParams& params);

/// 3D point behind a pixel; throws NoReturn when the pixel has no valid
/// return, InvalidInput when out of bounds.
Eigen::Vector3d lookup_point(const IntensityImage& img, const OrganizedScan& scan, int row,
                             int col);

/// Binary portable graymap (P5) dump for visual inspection.
void write_pgm(const IntensityImage& img, const std::filesystem::path& path);

}  // namespace ilam
