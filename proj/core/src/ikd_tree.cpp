#include "ilam/ikd_tree.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

// Total order on candidates: distance first, then coordinates. Shared
// meaning with the brute-force oracle in the tests so exact ties agree.
bool neighbor_less(const IkdTree::Neighbor& a, const IkdTree::Neighbor& b) {
  if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
  if (a.point.x() != b.point.x()) return a.point.x() < b.point.x();
  if (a.point.y() != b.point.y()) return a.point.y() < b.point.y();
  return a.point.z() < b.point.z();
}

bool coord_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b, int axis) {
  if (a[axis] != b[axis]) return a[axis] < b[axis];
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

int widest_axis(std::span<const Eigen::Vector3d> points) {
  Eigen::Vector3d lo = points.front();
  Eigen::Vector3d hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  return axis;
}

}  // namespace

bool IkdTree::goes_left(const Eigen::Vector3d& p, const Node& n) {
  // Must match the rebuild partition exactly or points with equal split
  // coordinates become unreachable.
  return coord_less(p, n.point, n.axis);
}

void IkdTree::pull_up(Node& n) {
  n.total = 1 + (n.left ? n.left->total : 0) + (n.right ? n.right->total : 0);
  n.live = (n.deleted ? 0 : 1) + (n.left ? n.left->live : 0) + (n.right ? n.right->live : 0);
  n.height = 1 + std::max(n.left ? n.left->height : 0, n.right ? n.right->height : 0);
}

bool IkdTree::needs_rebuild(const Node& n) {
  if (n.live == 0) return n.total > 0;
  if (double(n.live) / double(n.total) < 0.6) return true;
  return n.height > 2.0 * std::log2(double(n.live)) + 4.0;
}

void IkdTree::collect_live(const Node& n, std::vector<Eigen::Vector3d>& out) {
  if (n.live == 0) return;
  if (n.left) collect_live(*n.left, out);
  if (!n.deleted) out.push_back(n.point);
  if (n.right) collect_live(*n.right, out);
}

std::unique_ptr<IkdTree::Node> IkdTree::build_balanced(std::span<Eigen::Vector3d> points) {
  if (points.empty()) return nullptr;
  int axis = widest_axis(points);
  size_t mid = points.size() / 2;
  std::nth_element(points.begin(), points.begin() + mid, points.end(),
                   [axis](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
                     return coord_less(a, b, axis);
                   });
  auto node = std::make_unique<Node>();
  node->point = points[mid];
  node->axis = axis;
  node->left = build_balanced(points.subspan(0, mid));
  node->right = build_balanced(points.subspan(mid + 1));
  pull_up(*node);
  return node;
}

void IkdTree::rebuild(std::unique_ptr<Node>& node) {
  if (!node) return;
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(node->live);
  collect_live(*node, pts);
  node = build_balanced(pts);
}

void IkdTree::rebuild_violators(std::unique_ptr<Node>& node) {
  if (!node) return;
  if (needs_rebuild(*node)) {
    rebuild(node);
    return;
  }
  rebuild_violators(node->left);
  rebuild_violators(node->right);
  pull_up(*node);
}

void IkdTree::insert_rec(std::unique_ptr<Node>& node, const Eigen::Vector3d& p, int parent_axis) {
  if (!node) {
    node = std::make_unique<Node>();
    node->point = p;
    node->axis = (parent_axis + 1) % 3;
    return;
  }
  if (node->point == p) {
    node->deleted = false;  // revive a lazily deleted duplicate
  } else {
    insert_rec(goes_left(p, *node) ? node->left : node->right, p, node->axis);
  }
  pull_up(*node);
}

void IkdTree::insert_one(const Eigen::Vector3d& p) {
  if (!p.allFinite()) throw InvalidInput("ikd-tree insert: non-finite point");
  if (dedup_radius_ > 0.0 && root_) {
    std::vector<Neighbor> nearest;
    knn_rec(root_.get(), p, 1, nearest);
    if (!nearest.empty() && nearest.front().sq_dist < dedup_radius_ * dedup_radius_) return;
  }
  insert_rec(root_, p, -1);
  // At most one rebuild per insert: the topmost violator on the path.
  Node* cur = root_.get();
  std::unique_ptr<Node>* slot = &root_;
  while (cur) {
    if (needs_rebuild(*cur)) {
      rebuild(*slot);
      break;
    }
    slot = goes_left(p, *cur) ? &cur->left : &cur->right;
    cur = slot->get();
  }
}

void IkdTree::insert(std::span<const Eigen::Vector3d> points) {
  std::unique_lock lock(mutex_);
  for (const auto& p : points) insert_one(p);
}

size_t IkdTree::mark_outside(Node& n, const Eigen::Vector3d& center, double radius) {
  if (n.live == 0) return 0;
  size_t removed = 0;
  if (!n.deleted && (n.point - center).norm() > radius) {
    n.deleted = true;
    ++removed;
  }
  if (n.left) removed += mark_outside(*n.left, center, radius);
  if (n.right) removed += mark_outside(*n.right, center, radius);
  pull_up(n);
  return removed;
}

size_t IkdTree::remove_beyond(const Eigen::Vector3d& center, double radius) {
  if (radius < 0.0) throw InvalidParam("ikd-tree remove_beyond: negative radius");
  std::unique_lock lock(mutex_);
  if (!root_) return 0;
  size_t removed = mark_outside(*root_, center, radius);
  rebuild_violators(root_);
  return removed;
}

void IkdTree::knn_rec(const Node* n, const Eigen::Vector3d& query, int k,
                      std::vector<Neighbor>& heap) const {
  if (!n || n->live == 0) return;
  if (!n->deleted) {
    Neighbor cand{n->point, (n->point - query).squaredNorm()};
    if (int(heap.size()) < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), neighbor_less);
    } else if (neighbor_less(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), neighbor_less);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), neighbor_less);
    }
  }
  double diff = query[n->axis] - n->point[n->axis];
  const Node* near = diff < 0.0 ? n->left.get() : n->right.get();
  const Node* far = diff < 0.0 ? n->right.get() : n->left.get();
  knn_rec(near, query, k, heap);
  // The far side can still hold an equal-distance, lexicographically
  // smaller point, so prune on strict > only.
  if (int(heap.size()) < k || diff * diff <= heap.front().sq_dist) {
    knn_rec(far, query, k, heap);
  }
}

std::vector<IkdTree::Neighbor> IkdTree::knn(const Eigen::Vector3d& query, int k) const {
  if (k <= 0) throw InvalidParam("ikd-tree knn: k must be positive");
  if (!query.allFinite()) throw InvalidInput("ikd-tree knn: non-finite query");
  std::shared_lock lock(mutex_);
  std::vector<Neighbor> heap;
  heap.reserve(size_t(k));
  knn_rec(root_.get(), query, k, heap);
  std::sort_heap(heap.begin(), heap.end(), neighbor_less);
  return heap;
}

size_t IkdTree::size() const {
  std::shared_lock lock(mutex_);
  return root_ ? size_t(root_->live) : 0;
}

int IkdTree::height() const {
  std::shared_lock lock(mutex_);
  return root_ ? root_->height : 0;
}

void IkdTree::clear() {
  std::unique_lock lock(mutex_);
  root_.reset();
}

std::vector<Eigen::Vector3d> IkdTree::live_points() const {
  std::shared_lock lock(mutex_);
  std::vector<Eigen::Vector3d> out;
  if (root_) {
    out.reserve(root_->live);
    collect_live(*root_, out);
  }
  return out;
}

void IkdTree::validate() const {
  std::shared_lock lock(mutex_);
  struct Check {
    std::vector<std::pair<const Node*, bool>> path;  // (ancestor, went left)

    void run(const Node* n) {
      if (!n) return;
      int total = 1 + (n->left ? n->left->total : 0) + (n->right ? n->right->total : 0);
      int live =
          (n->deleted ? 0 : 1) + (n->left ? n->left->live : 0) + (n->right ? n->right->live : 0);
      int height = 1 + std::max(n->left ? n->left->height : 0, n->right ? n->right->height : 0);
      if (total != n->total || live != n->live || height != n->height) {
        throw Error("ikd-tree invariant violated: stale subtree counters");
      }
      for (const auto& [anc, went_left] : path) {
        if (goes_left(n->point, *anc) != went_left) {
          throw Error("ikd-tree invariant violated: point unreachable by descent");
        }
      }
      path.emplace_back(n, true);
      run(n->left.get());
      path.back().second = false;
      run(n->right.get());
      path.pop_back();
    }
  };
  Check check;
  check.run(root_.get());
}

}  // namespace ilam
