#include "ilam/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ilam/errors.hpp"
#include "ilam/geometry.hpp"

namespace ilam {

ApeStats evaluate_ape(std::span<const TrajectoryRecord> estimate,
                      std::span<const TrajectoryRecord> ground_truth, double max_dt) {
  if (max_dt < 0.0) throw InvalidParam("evaluate_ape: negative max_dt");

  std::vector<double> gt_times;
  gt_times.reserve(ground_truth.size());
  for (const auto& r : ground_truth) gt_times.push_back(r.timestamp);

  std::vector<Eigen::Vector3d> est_pts;
  std::vector<Eigen::Vector3d> gt_pts;
  for (const auto& r : estimate) {
    auto it = std::lower_bound(gt_times.begin(), gt_times.end(), r.timestamp);
    std::size_t best = gt_times.size();
    if (it != gt_times.end()) best = static_cast<std::size_t>(it - gt_times.begin());
    if (it != gt_times.begin()) {
      const std::size_t prev = static_cast<std::size_t>(it - gt_times.begin()) - 1;
      if (best == gt_times.size() ||
          r.timestamp - gt_times[prev] <= gt_times[best] - r.timestamp) {
        best = prev;
      }
    }
    if (best == gt_times.size()) continue;
    if (std::abs(gt_times[best] - r.timestamp) > max_dt) continue;
    est_pts.push_back(r.pose.translation());
    gt_pts.push_back(ground_truth[best].pose.translation());
  }

  if (est_pts.empty()) throw NoAssociations("evaluate_ape: no timestamp pairs within tolerance");

  // Straight trajectories are collinear, so the rank-2 requirement is
  // dropped: the unconstrained in-line rotation does not change any
  // residual.
  const std::vector<double> ones(est_pts.size(), 1.0);
  const Se3Pose align = weighted_rigid_align(est_pts, gt_pts, ones, /*require_rank2=*/false);

  std::vector<double> errors;
  errors.reserve(est_pts.size());
  double sum = 0.0, sum_sq = 0.0, max_err = 0.0;
  for (std::size_t i = 0; i < est_pts.size(); ++i) {
    const double e = (transform_point(align, est_pts[i]) - gt_pts[i]).norm();
    errors.push_back(e);
    sum += e;
    sum_sq += e * e;
    max_err = std::max(max_err, e);
  }

  ApeStats stats;
  stats.pairs = errors.size();
  stats.mean = sum / static_cast<double>(errors.size());
  stats.rmse = std::sqrt(sum_sq / static_cast<double>(errors.size()));
  stats.max = max_err;
  std::sort(errors.begin(), errors.end());
  const std::size_t mid = errors.size() / 2;
  stats.median = (errors.size() % 2 == 1) ? errors[mid] : 0.5 * (errors[mid - 1] + errors[mid]);
  return stats;
}

}  // namespace ilam
