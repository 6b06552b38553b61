#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/geometry.hpp"
#include "ilam/loop_closure.hpp"

namespace ilam {

struct GraphEdge {
  enum class Kind { kOdometry, kLoop };

  int from = 0;
  int to = 0;
  Se3Pose relative;  // measured pose of `to` expressed in `from`
  Eigen::Matrix<double, 6, 6> information = Eigen::Matrix<double, 6, 6>::Identity();
  Kind kind = Kind::kOdometry;
};

/// Keyframe gate: significant translation OR rotation since the last
/// keyframe, or a tracking-quality drop (too few matches).
bool maybe_keyframe(const Se3Pose& pose, const Se3Pose& last_kf_pose, int matched_count,
                    const Config& cfg);

/// Edge residual log(relative^-1 * (pose_from^-1 * pose_to)) as a twist.
Twist edge_residual(const GraphEdge& edge, const Se3Pose& pose_from, const Se3Pose& pose_to);

/// Jacobian of the edge residual w.r.t. the left perturbation of
/// pose_to; the Jacobian w.r.t. pose_from is its negation.
Eigen::Matrix<double, 6, 6> edge_jacobian_to(const GraphEdge& edge, const Se3Pose& pose_from,
                                             const Se3Pose& pose_to);

/// Batch pose-graph optimization: Levenberg-Marquardt over the product
/// of per-vertex tangents with sparse normal equations. Vertices listed
/// in `fixed` stay put (vertex 0 when the list is empty). Terminates at
/// gradient norm < 1e-8, step norm < 1e-10, or 50 iterations.
/// Throws DisconnectedGraph / NotPositiveDefinite on contract violations.
std::vector<Se3Pose> optimize_graph(std::vector<Se3Pose> vertices,
                                    std::span<const GraphEdge> edges,
                                    std::span<const int> fixed = {});

/// Keyframe vertices plus odometry/loop edges, optimized on loop closure.
class PoseGraph {
 public:
  /// Appends a vertex; an odometry edge from the previous vertex (with
  /// identity information) is added automatically when one exists, with
  /// the relative measurement taken from the two supplied poses.
  int add_vertex(const Se3Pose& pose);

  void add_edge(const GraphEdge& edge);

  size_t size() const { return poses_.size(); }
  const std::vector<Se3Pose>& poses() const { return poses_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }

  /// Appends the loop edge, optimizes with vertex 0 fixed, rewrites all
  /// vertex poses, and returns the anchor correction
  /// optimized_latest * previous_latest^-1.
  Se3Pose on_loop(const LoopCandidate& candidate, const Eigen::Matrix<double, 6, 6>& information);

  /// VERTEX_SE3:QUAT / EDGE_SE3:QUAT text dump.
  void dump(std::ostream& os) const;

 private:
  std::vector<Se3Pose> poses_;
  std::vector<GraphEdge> edges_;
};

}  // namespace ilam
