#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "ilam/scan.hpp"

namespace ilam {

struct PlanePoint {
  enum class Kind { kGround, kGeneral };
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // sensor frame
  Kind kind = Kind::kGeneral;
};

/// Plane normal*x + offset = 0; normal is unit length and points up.
struct GroundModel {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  int inlier_count = 0;

  double distance(const Eigen::Vector3d& p) const { return std::abs(normal.dot(p) + offset); }
};

struct GroundSegmentation {
  GroundModel model;
  std::vector<PlanePoint> inliers;  // tagged kGround
  std::vector<int> inlier_cells;    // scan cell indices of the inliers
};

/// Ring-wise smoothness selection: per ring, each point's smoothness is
/// the norm of the summed offsets to its 5 neighbors on each side over
/// 10x its range; the per_sector smoothest candidates in each of 6
/// azimuth sectors are returned. Rings are treated as unwrapped, so only
/// columns [5, cols-6] are candidates. Points at occlusion boundaries or
/// on near-parallel surfaces are excluded, as are any cells listed in
/// excluded_cells.
std::vector<PlanePoint> extract_general_planes(const OrganizedScan& scan, int per_sector,
                                               std::span<const int> excluded_cells = {});

/// RANSAC ground fit over valid points with z within height_prior
/// +/- 0.5 m. Hypotheses are 3-point planes oriented within 30 degrees
/// of +z; inliers lie within 0.05 m. The winner is refit to its inliers
/// and inliers are recomputed against the refit model. Throws NoGround
/// when there are fewer than 50 candidates or no acceptable model.
GroundSegmentation segment_ground(const OrganizedScan& scan, double height_prior, int iterations,
                                  uint32_t seed = 42);

/// Centroid-per-voxel downsampling; deterministic for a given input order.
std::vector<PlanePoint> voxel_downsample(std::span<const PlanePoint> points, double voxel);

}  // namespace ilam
