#pragma once

#include <Eigen/Dense>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

namespace ilam {

/// Incremental 3D k-d tree with lazy deletion and criterion-triggered
/// partial rebuilds. Subtrees are rebuilt flat when their live/total
/// ratio drops below 0.6 or their height exceeds 2*log2(live)+4; rebuilds
/// split on the widest-spread axis at the median.
///
/// Concurrency: single writer, multiple readers. knn takes a shared
/// lock; insert/remove_beyond take an exclusive one.
class IkdTree {
 public:
  struct Neighbor {
    Eigen::Vector3d point;
    double sq_dist;
  };

  /// dedup_radius: inserts closer than this to an existing live point
  /// are skipped; pass 0 to keep every point.
  explicit IkdTree(double dedup_radius = 0.05) : dedup_radius_(dedup_radius) {}

  void insert(std::span<const Eigen::Vector3d> points);
  void insert(const Eigen::Vector3d& point) { insert(std::span(&point, 1)); }

  /// The min(k, size) nearest live points by Euclidean distance,
  /// ascending; exact ties broken by lexicographic coordinate order.
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, int k) const;

  /// Lazily deletes live points strictly outside the ball; returns the
  /// number removed.
  size_t remove_beyond(const Eigen::Vector3d& center, double radius);

  size_t size() const;
  bool empty() const { return size() == 0; }
  int height() const;
  void clear();

  std::vector<Eigen::Vector3d> live_points() const;

  /// Recounts every subtree; throws Error when a size counter disagrees.
  void validate() const;

 private:
  struct Node {
    Eigen::Vector3d point;
    int axis = 0;
    bool deleted = false;
    int total = 1;  // nodes in subtree including self
    int live = 1;   // non-deleted nodes in subtree
    int height = 1;
    std::unique_ptr<Node> left;
    std::unique_ptr<Node> right;
  };

  static bool goes_left(const Eigen::Vector3d& p, const Node& n);
  static void pull_up(Node& n);
  static bool needs_rebuild(const Node& n);
  static void collect_live(const Node& n, std::vector<Eigen::Vector3d>& out);
  static std::unique_ptr<Node> build_balanced(std::span<Eigen::Vector3d> points);

  void insert_one(const Eigen::Vector3d& p);
  static void insert_rec(std::unique_ptr<Node>& node, const Eigen::Vector3d& p, int parent_axis);
  static void rebuild(std::unique_ptr<Node>& node);
  static void rebuild_violators(std::unique_ptr<Node>& node);
  static size_t mark_outside(Node& n, const Eigen::Vector3d& center, double radius);
  void knn_rec(const Node* n, const Eigen::Vector3d& query, int k,
               std::vector<Neighbor>& heap) const;

  double dedup_radius_;
  std::unique_ptr<Node> root_;
  mutable std::shared_mutex mutex_;
};

}  // namespace ilam
