#include "ilam/odometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ilam/errors.hpp"
#include "ilam/ikd_tree.hpp"

namespace ilam {

namespace {

constexpr int kMaxTrimRounds = 5;
constexpr double kTrimFloor = 1e-6;       // m; keeps noise-free input from trimming itself
constexpr double kIcpGate = 2.0;          // m; association cutoff
constexpr double kIcpPoseTol = 1e-6;      // convergence on the update twist norm
constexpr size_t kIcpMaxSrcPoints = 4096;

// Physical bounds on one inter-frame step (10 Hz class sensor): at most
// 1 m of translation and 45 degrees of rotation. 2*sin(45deg/2) = 0.765
// converts the rotation bound into a displacement per meter of range.
constexpr double kMaxStepTranslation = 1.0;
constexpr double kMaxStepRotationChord = 0.7654;
constexpr double kMaxSaneResidual = 0.5;  // m; mean inlier residual above this is a failed fit

double median_of(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

}  // namespace

OdometryEstimate register_matched(std::span<const Eigen::Vector3d> prev_pts,
                                  std::span<const Eigen::Vector3d> curr_pts,
                                  std::span<const double> scores, int min_matches,
                                  RegisterDiagnostics* diag) {
  const size_t n = prev_pts.size();
  if (curr_pts.size() != n || scores.size() != n) {
    throw InvalidInput("register_matched: size mismatch");
  }
  if (int(n) < min_matches) {
    throw InsufficientMatches("register_matched: " + std::to_string(n) + " matches, need " +
                              std::to_string(min_matches));
  }

  std::vector<double> weights(n);
  for (size_t i = 0; i < n; ++i) {
    if (scores[i] < 0.0) throw InvalidInput("register_matched: negative score");
    weights[i] = scores[i] * scores[i];
  }

  Se3Pose pose;
  std::vector<double> residuals(n, 0.0);
  for (int round = 0; round < kMaxTrimRounds; ++round) {
    pose = weighted_rigid_align(prev_pts, curr_pts, weights);
    std::vector<double> live;
    live.reserve(n);
    double objective = 0.0;
    for (size_t i = 0; i < n; ++i) {
      residuals[i] = (curr_pts[i] - transform_point(pose, prev_pts[i])).norm();
      if (weights[i] > 0.0) {
        live.push_back(residuals[i]);
        objective += weights[i] * residuals[i] * residuals[i];
      }
    }
    if (diag) diag->round_objectives.push_back(objective);
    const double threshold = std::max(3.0 * median_of(live), kTrimFloor);
    std::vector<size_t> rejects;
    for (size_t i = 0; i < n; ++i) {
      if (weights[i] > 0.0 && residuals[i] > threshold) rejects.push_back(i);
    }
    if (diag) diag->round_rejections.push_back(int(rejects.size()));
    if (rejects.empty() || live.size() - rejects.size() < 3) break;
    for (size_t i : rejects) weights[i] = 0.0;
  }

  OdometryEstimate est;
  est.relative = pose;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (weights[i] > 0.0) {
      ++est.inlier_count;
      sum += residuals[i];
    }
  }
  est.mean_residual = est.inlier_count > 0 ? sum / est.inlier_count : 0.0;
  return est;
}

Se3Pose icp_align(const OrganizedScan& src, const OrganizedScan& dst, int max_iter) {
  if (max_iter <= 0) throw InvalidParam("icp_align: max_iter must be positive");

  std::vector<Eigen::Vector3d> src_pts, dst_pts;
  for (const auto& p : src.points) {
    if (p.valid) src_pts.push_back(p.position());
  }
  for (const auto& p : dst.points) {
    if (p.valid) dst_pts.push_back(p.position());
  }
  if (src_pts.size() < 100 || dst_pts.size() < 100) {
    throw InvalidInput("icp_align: scans need at least 100 valid points");
  }
  if (src_pts.size() > kIcpMaxSrcPoints) {
    const size_t stride = (src_pts.size() + kIcpMaxSrcPoints - 1) / kIcpMaxSrcPoints;
    std::vector<Eigen::Vector3d> thin;
    for (size_t i = 0; i < src_pts.size(); i += stride) thin.push_back(src_pts[i]);
    src_pts.swap(thin);
  }

  IkdTree tree(0.0);
  tree.insert(dst_pts);

  Se3Pose pose;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<Eigen::Vector3d> moved, targets;
    std::vector<double> ones;
    moved.reserve(src_pts.size());
    targets.reserve(src_pts.size());
    for (const auto& p : src_pts) {
      const Eigen::Vector3d q = transform_point(pose, p);
      const auto nn = tree.knn(q, 1);
      if (!nn.empty() && nn.front().sq_dist <= kIcpGate * kIcpGate) {
        moved.push_back(q);
        targets.push_back(nn.front().point);
        ones.push_back(1.0);
      }
    }
    if (moved.size() < 100) {
      throw NoConvergence("icp_align: " + std::to_string(moved.size()) +
                          " associations inside the gate");
    }
    const Se3Pose delta = weighted_rigid_align(moved, targets, ones);
    pose = compose(delta, pose);
    if (log_se3(delta).norm() < kIcpPoseTol) return pose;
  }
  throw NoConvergence("icp_align: no convergence after " + std::to_string(max_iter) +
                      " iterations");
}

OdometryEstimate Odometry::advance(const IntensityFrame& prev, const IntensityFrame& curr) {
  std::vector<MatchPair> matches =
      match(prev.features, curr.features, cfg_.max_hamming, cfg_.match_ratio);

  std::vector<Eigen::Vector3d> prev_pts, curr_pts;
  std::vector<double> scores;
  prev_pts.reserve(matches.size());
  curr_pts.reserve(matches.size());
  scores.reserve(matches.size());
  for (const auto& m : matches) {
    const Eigen::Vector3d& a = prev.features[size_t(m.index_prev)].point3d;
    const Eigen::Vector3d& b = curr.features[size_t(m.index_curr)].point3d;
    // Consecutive spins cannot move a true match further than one frame
    // of ego motion: |b - a| <= T_max + 2 sin(theta_max/2) * range. An
    // aliased match violating this acts as a high-leverage outlier that
    // can flip the closed-form alignment before trimming starts.
    const double range = std::min(a.norm(), b.norm());
    if ((b - a).norm() > kMaxStepTranslation + kMaxStepRotationChord * range) continue;
    prev_pts.push_back(a);
    curr_pts.push_back(b);
    scores.push_back(m.score);
  }

  if (int(prev_pts.size()) >= cfg_.min_matches) {
    try {
      // Solving for the map curr->prev makes the estimate the sensor
      // motion: a forward step shows up as forward translation.
      OdometryEstimate est = register_matched(curr_pts, prev_pts, scores, cfg_.min_matches);
      // A consensus of aliases leaves uniformly large residuals the trim
      // loop cannot separate; treat such fits as failures.
      if (est.mean_residual <= kMaxSaneResidual) {
        last_relative_ = est.relative;
        return est;
      }
    } catch (const DegenerateConfiguration&) {
      // fall through to prediction
    }
  }

  OdometryEstimate est;
  est.relative = last_relative_;
  est.low_confidence = true;
  return est;
}

}  // namespace ilam
