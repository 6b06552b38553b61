#include "ilam/plane_extraction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <tuple>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

constexpr int kHalfWindow = 5;
constexpr double kOcclusionJump = 0.3;      // m between azimuth neighbors
constexpr double kParallelFrac = 0.0002;    // squared-distance fraction of range^2
constexpr double kMinRange = 0.1;           // m
constexpr double kGroundBand = 0.5;         // m around the height prior
constexpr double kGroundInlierDist = 0.05;  // m
constexpr int kMinGroundCandidates = 50;
constexpr int kMinGroundInliers = 25;
const double kMaxGroundTiltCos = std::cos(30.0 * M_PI / 180.0);

struct PlaneFit {
  Eigen::Vector3d normal;
  double offset;
};

// Least-squares plane through the points: centroid + smallest covariance
// eigenvector, oriented upward.
PlaneFit fit_plane(const OrganizedScan& scan, const std::vector<int>& cells) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int c : cells) centroid += scan.points[size_t(c)].position();
  centroid /= double(cells.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int c : cells) {
    const Eigen::Vector3d d = scan.points[size_t(c)].position() - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d normal = eig.eigenvectors().col(0);
  if (normal.z() < 0.0) normal = -normal;
  return {normal, -normal.dot(centroid)};
}

}  // namespace

std::vector<PlanePoint> extract_general_planes(const OrganizedScan& scan, int per_sector,
                                               std::span<const int> excluded_cells) {
  if (per_sector <= 0) throw InvalidParam("per_sector must be positive");
  if (scan.rows <= 0 || scan.cols <= 2 * kHalfWindow) return {};

  std::vector<uint8_t> excluded(scan.points.size(), 0);
  for (int c : excluded_cells) {
    if (c >= 0 && c < int(scan.points.size())) excluded[size_t(c)] = 1;
  }

  // Occlusion boundaries: when the range jumps between azimuth
  // neighbors, the five points on the far side of the jump are shadow
  // edges, not surface structure.
  for (int r = 0; r < scan.rows; ++r) {
    for (int c = 0; c + 1 < scan.cols; ++c) {
      const auto& a = scan.at(r, c);
      const auto& b = scan.at(r, c + 1);
      if (!a.valid || !b.valid) continue;
      const double ra = a.range(), rb = b.range();
      if (rb - ra > kOcclusionJump) {
        for (int k = 1; k <= kHalfWindow && c + k < scan.cols; ++k) {
          excluded[scan.index(r, c + k)] = 1;
        }
      } else if (ra - rb > kOcclusionJump) {
        for (int k = 0; k < kHalfWindow && c - k >= 0; ++k) {
          excluded[scan.index(r, c - k)] = 1;
        }
      }
    }
  }

  struct Candidate {
    double c;
    int row;
    int col;
  };
  std::vector<std::vector<Candidate>> sectors(6);

  for (int r = 0; r < scan.rows; ++r) {
    for (int c = kHalfWindow; c + kHalfWindow < scan.cols; ++c) {
      const auto& p = scan.at(r, c);
      if (!p.valid || excluded[scan.index(r, c)]) continue;
      const double range = p.range();
      if (range < kMinRange) continue;
      const Eigen::Vector3d x = p.position();
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      bool window_ok = true;
      for (int k = -kHalfWindow; k <= kHalfWindow; ++k) {
        if (k == 0) continue;
        const auto& n = scan.at(r, c + k);
        if (!n.valid) {
          window_ok = false;
          break;
        }
        sum += n.position() - x;
      }
      if (!window_ok) continue;
      // Beams nearly parallel to the surface: both immediate neighbors
      // are far away relative to range.
      const Eigen::Vector3d prev = scan.at(r, c - 1).position();
      const Eigen::Vector3d next = scan.at(r, c + 1).position();
      const double lim = kParallelFrac * range * range;
      if ((prev - x).squaredNorm() > lim && (next - x).squaredNorm() > lim) continue;
      const double smooth = sum.norm() / (2.0 * kHalfWindow * range);
      sectors[size_t(c * 6 / scan.cols)].push_back({smooth, r, c});
    }
  }

  std::vector<PlanePoint> out;
  out.reserve(size_t(6 * per_sector));
  for (auto& sec : sectors) {
    const size_t take = std::min(sec.size(), size_t(per_sector));
    std::partial_sort(sec.begin(), sec.begin() + take, sec.end(),
                      [](const Candidate& a, const Candidate& b) {
                        return std::tie(a.c, a.row, a.col) < std::tie(b.c, b.row, b.col);
                      });
    for (size_t i = 0; i < take; ++i) {
      out.push_back({scan.at(sec[i].row, sec[i].col).position(), PlanePoint::Kind::kGeneral});
    }
  }
  return out;
}

GroundSegmentation segment_ground(const OrganizedScan& scan, double height_prior, int iterations,
                                  uint32_t seed) {
  if (iterations <= 0) throw InvalidParam("iterations must be positive");
  std::vector<int> candidates;
  for (size_t i = 0; i < scan.points.size(); ++i) {
    const auto& p = scan.points[i];
    if (p.valid && std::abs(p.z - height_prior) <= kGroundBand && p.range() >= kMinRange) {
      candidates.push_back(int(i));
    }
  }
  if (int(candidates.size()) < kMinGroundCandidates) {
    throw NoGround("ground segmentation: " + std::to_string(candidates.size()) +
                   " candidates near prior height, need " + std::to_string(kMinGroundCandidates));
  }

  std::mt19937 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
  Eigen::Vector3d best_normal = Eigen::Vector3d::Zero();
  double best_offset = 0.0;
  int best_count = 0;
  for (int it = 0; it < iterations; ++it) {
    const size_t ia = pick(rng), ib = pick(rng), ic = pick(rng);
    if (ia == ib || ib == ic || ia == ic) continue;
    const Eigen::Vector3d a = scan.points[size_t(candidates[ia])].position();
    const Eigen::Vector3d b = scan.points[size_t(candidates[ib])].position();
    const Eigen::Vector3d c = scan.points[size_t(candidates[ic])].position();
    Eigen::Vector3d n = (b - a).cross(c - a);
    const double len = n.norm();
    if (len < 1e-9) continue;
    n /= len;
    if (n.z() < 0.0) n = -n;
    if (n.z() < kMaxGroundTiltCos) continue;  // hypothesis too far from upright
    const double d = -n.dot(a);
    int count = 0;
    for (int cell : candidates) {
      if (std::abs(n.dot(scan.points[size_t(cell)].position()) + d) <= kGroundInlierDist) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_normal = n;
      best_offset = d;
    }
  }
  if (best_count < kMinGroundInliers) {
    throw NoGround("ground segmentation: best model has " + std::to_string(best_count) +
                   " inliers, need " + std::to_string(kMinGroundInliers));
  }

  auto collect = [&](const Eigen::Vector3d& n, double d) {
    std::vector<int> cells;
    for (int cell : candidates) {
      if (std::abs(n.dot(scan.points[size_t(cell)].position()) + d) <= kGroundInlierDist) {
        cells.push_back(cell);
      }
    }
    return cells;
  };

  std::vector<int> inlier_cells = collect(best_normal, best_offset);
  PlaneFit refit = fit_plane(scan, inlier_cells);
  if (refit.normal.z() < kMaxGroundTiltCos) {
    throw NoGround("ground segmentation: refit plane tilted beyond 30 degrees");
  }
  inlier_cells = collect(refit.normal, refit.offset);
  if (int(inlier_cells.size()) < kMinGroundInliers) {
    throw NoGround("ground segmentation: refit model keeps too few inliers");
  }

  GroundSegmentation out;
  out.model.normal = refit.normal;
  out.model.offset = refit.offset;
  out.model.inlier_count = int(inlier_cells.size());
  out.inlier_cells = std::move(inlier_cells);
  out.inliers.reserve(out.inlier_cells.size());
  for (int cell : out.inlier_cells) {
    out.inliers.push_back({scan.points[size_t(cell)].position(), PlanePoint::Kind::kGround});
  }
  return out;
}

std::vector<PlanePoint> voxel_downsample(std::span<const PlanePoint> points, double voxel) {
  if (voxel <= 0.0) throw InvalidParam("voxel size must be positive");
  struct Cell {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    int count = 0;
    PlanePoint::Kind kind = PlanePoint::Kind::kGeneral;
  };
  std::map<std::tuple<int64_t, int64_t, int64_t>, Cell> grid;
  for (const auto& p : points) {
    auto key = std::make_tuple(int64_t(std::floor(p.position.x() / voxel)),
                               int64_t(std::floor(p.position.y() / voxel)),
                               int64_t(std::floor(p.position.z() / voxel)));
    auto& cell = grid[key];
    if (cell.count == 0) cell.kind = p.kind;
    cell.sum += p.position;
    ++cell.count;
  }
  std::vector<PlanePoint> out;
  out.reserve(grid.size());
  for (const auto& [key, cell] : grid) {
    out.push_back({cell.sum / double(cell.count), cell.kind});
  }
  return out;
}

}  // namespace ilam
