#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/features.hpp"
#include "ilam/geometry.hpp"
#include "ilam/scan.hpp"

namespace ilam {

struct OdometryEstimate {
  Se3Pose relative;  // pose of the later frame in the earlier frame
  int inlier_count = 0;
  double mean_residual = 0.0;
  bool low_confidence = false;
};

struct RegisterDiagnostics {
  std::vector<double> round_objectives;  // weighted objective after each solve
  std::vector<int> round_rejections;     // matches trimmed after each solve
};

/// Weighted closed-form alignment inside a trimmed robust loop: solves
/// for (R, T) minimizing sum of score^2 * |curr - (R*prev + T)|^2, then
/// zeroes matches whose residual exceeds 3x the median (never below an
/// absolute 1e-6 floor) and re-solves, at most 5 rounds. The returned
/// pose maps prev coordinates onto curr coordinates.
OdometryEstimate register_matched(std::span<const Eigen::Vector3d> prev_pts,
                                  std::span<const Eigen::Vector3d> curr_pts,
                                  std::span<const double> scores, int min_matches = 8,
                                  RegisterDiagnostics* diag = nullptr);

/// Point-to-point ICP against a k-d tree over dst; returns the pose
/// mapping src coordinates onto dst coordinates. Test oracle, not a
/// pipeline stage.
Se3Pose icp_align(const OrganizedScan& src, const OrganizedScan& dst, int max_iter = 50);

/// Frame-to-frame tracking: descriptor matching plus register_matched,
/// with a constant-velocity fallback when matching fails. The estimate
/// is the sensor motion, i.e. the pose of curr expressed in prev.
class Odometry {
 public:
  explicit Odometry(const Config& cfg) : cfg_(cfg) {}

  OdometryEstimate advance(const IntensityFrame& prev, const IntensityFrame& curr);

 private:
  Config cfg_;
  Se3Pose last_relative_;  // identity until the first confident estimate
};

}  // namespace ilam
