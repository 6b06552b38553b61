#include "ilam/map_optimization.hpp"

#include <algorithm>
#include <cmath>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

constexpr int kMaxIterations = 10;
constexpr double kPoseTol = 1e-6;
constexpr double kAnchorRadius = 1.0;   // m; every anchor must lie this close to the source
constexpr double kPlanarityRms = 0.05;  // m; neighborhood RMS against the anchor plane
constexpr int kNeighborCount = 5;       // 3 anchors + 2 extra for the planarity gate
constexpr double kLambdaInit = 1e-4;
constexpr double kDegenerateCross = 1e-6;
constexpr double kBaGate = 0.3;  // m; descriptor aliases land meters away, inliers at cm

Eigen::Vector3d anchor_normal(const PlaneAssociation& assoc) {
  const Eigen::Vector3d cross =
      (assoc.anchors[1] - assoc.anchors[0]).cross(assoc.anchors[2] - assoc.anchors[0]);
  const double len = cross.norm();
  if (len <= kDegenerateCross) {
    throw DegeneratePlane("plane association anchors are collinear");
  }
  return cross / len;
}

double huber_cost(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? r * r : delta * (2.0 * a - delta);
}

double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

struct Associations {
  std::vector<PlaneAssociation> planes;
};

Associations build_associations(const IkdTree& map, std::span<const PlanePoint> plane_points,
                                const Se3Pose& pose) {
  Associations out;
  if (map.empty()) return out;
  out.planes.reserve(plane_points.size());
  for (const auto& pp : plane_points) {
    const Eigen::Vector3d q = transform_point(pose, pp.position);
    const auto nn = map.knn(q, kNeighborCount);
    if (nn.size() < 3) continue;
    if (nn[2].sq_dist > kAnchorRadius * kAnchorRadius) continue;
    PlaneAssociation assoc;
    assoc.source = pp.position;
    assoc.anchors = {nn[0].point, nn[1].point, nn[2].point};
    const Eigen::Vector3d cross =
        (assoc.anchors[1] - assoc.anchors[0]).cross(assoc.anchors[2] - assoc.anchors[0]);
    const double len = cross.norm();
    if (len <= kDegenerateCross) continue;
    assoc.normal = cross / len;
    // Local planarity: the whole neighborhood, not just the anchor
    // triple, has to sit on the anchor plane.
    double sq_sum = 0.0;
    for (const auto& n : nn) {
      const double d = assoc.normal.dot(n.point - assoc.anchors[0]);
      sq_sum += d * d;
    }
    if (std::sqrt(sq_sum / double(nn.size())) >= kPlanarityRms) continue;
    out.planes.push_back(assoc);
  }
  return out;
}

double evaluate_cost(const Se3Pose& pose, std::span<const WindowFrame> window,
                     std::span<const BaCorrespondence> correspondences,
                     const std::vector<PlaneAssociation>& planes, double huber_delta) {
  double cost = 0.0;
  for (const auto& c : correspondences) {
    const Eigen::Vector3d r = transform_point(pose, c.current_point) -
                              transform_point(window[size_t(c.window_index)].pose, c.window_point);
    cost += r.squaredNorm();
  }
  for (const auto& a : planes) {
    cost += huber_cost(a.normal.dot(transform_point(pose, a.source) - a.anchors[0]), huber_delta);
  }
  return cost;
}

}  // namespace

double plane_residual(const PlaneAssociation& assoc, const Se3Pose& pose) {
  const Eigen::Vector3d normal = anchor_normal(assoc);
  return normal.dot(transform_point(pose, assoc.source) - assoc.anchors[0]);
}

PlaneAssociation make_plane_association(const Eigen::Vector3d& source, const Eigen::Vector3d& a0,
                                        const Eigen::Vector3d& a1, const Eigen::Vector3d& a2) {
  PlaneAssociation assoc;
  assoc.source = source;
  assoc.anchors = {a0, a1, a2};
  assoc.normal = anchor_normal(assoc);
  return assoc;
}

std::vector<Eigen::Vector3d> ba_residual(std::span<const WindowFrame> window,
                                         const Se3Pose& current_pose,
                                         std::span<const BaCorrespondence> correspondences) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(correspondences.size());
  for (const auto& c : correspondences) {
    if (c.window_index < 0 || c.window_index >= int(window.size())) {
      throw InvalidInput("ba_residual: correspondence references a missing window frame");
    }
    out.push_back(transform_point(current_pose, c.current_point) -
                  transform_point(window[size_t(c.window_index)].pose, c.window_point));
  }
  return out;
}

std::vector<BaCorrespondence> match_window(std::span<const WindowFrame> window,
                                           const std::vector<Feature>& current_features,
                                           int max_hamming, double match_ratio) {
  std::vector<BaCorrespondence> out;
  for (size_t i = 0; i < window.size(); ++i) {
    const auto matches = match(window[i].features, current_features, max_hamming, match_ratio);
    for (const auto& m : matches) {
      out.push_back({int(i), current_features[size_t(m.index_curr)].point3d,
                     window[i].features[size_t(m.index_prev)].point3d});
    }
  }
  return out;
}

MapOptimizeResult optimize(const Se3Pose& init, const std::vector<Feature>& current_features,
                           std::span<const WindowFrame> window, IkdTree& map,
                           std::span<const PlanePoint> plane_points, const Config& cfg) {
  MapOptimizeResult res;
  res.pose = init;

  const std::vector<BaCorrespondence> corr =
      match_window(window, current_features, cfg.max_hamming, cfg.match_ratio);
  res.ba_correspondences = int(corr.size());

  double lambda = kLambdaInit;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Associations assoc = build_associations(map, plane_points, res.pose);
    res.plane_associations = int(assoc.planes.size());

    // Matches are re-gated against the current estimate every iteration:
    // true pairs sit within centimeters of the prediction while aliased
    // descriptors pair points meters apart, and one such pair under a
    // squared loss outweighs hundreds of inliers.
    std::vector<BaCorrespondence> active;
    active.reserve(corr.size());
    for (const auto& c : corr) {
      const Eigen::Vector3d r =
          transform_point(res.pose, c.current_point) -
          transform_point(window[size_t(c.window_index)].pose, c.window_point);
      if (r.norm() <= kBaGate) active.push_back(c);
    }
    res.ba_correspondences = int(active.size());

    if (active.empty() && assoc.planes.empty()) {
      res.fell_back = iter == 0;
      break;
    }
    res.iterations = iter + 1;

    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    double cost = 0.0;
    for (const auto& c : active) {
      const Eigen::Vector3d r =
          transform_point(res.pose, c.current_point) -
          transform_point(window[size_t(c.window_index)].pose, c.window_point);
      const Eigen::Matrix<double, 3, 6> J = transform_point_jacobian(res.pose, c.current_point);
      H += J.transpose() * J;
      g += J.transpose() * r;
      cost += r.squaredNorm();
    }
    for (const auto& a : assoc.planes) {
      const double r = a.normal.dot(transform_point(res.pose, a.source) - a.anchors[0]);
      const Eigen::Matrix<double, 1, 6> J =
          a.normal.transpose() * transform_point_jacobian(res.pose, a.source);
      const double w = huber_weight(r, cfg.huber_delta);
      H += w * J.transpose() * J;
      g += w * J.transpose() * r;
      cost += huber_cost(r, cfg.huber_delta);
    }
    res.final_cost = cost;

    bool accepted = false;
    Twist step;
    for (int attempt = 0; attempt < 6; ++attempt) {
      const Eigen::Matrix<double, 6, 6> damped =
          H + lambda * Eigen::Matrix<double, 6, 6>::Identity();
      const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
      step = Twist::from_vector(delta);
      const Se3Pose candidate = apply_perturbation(step, res.pose);
      const double cand_cost =
          evaluate_cost(candidate, window, active, assoc.planes, cfg.huber_delta);
      if (cand_cost < cost) {
        res.pose = candidate;
        res.final_cost = cand_cost;
        lambda = std::max(lambda * 0.5, 1e-9);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted || step.norm() < kPoseTol) break;
  }

  if (!plane_points.empty()) {
    std::vector<Eigen::Vector3d> transformed;
    transformed.reserve(plane_points.size());
    for (const auto& pp : plane_points) {
      transformed.push_back(transform_point(res.pose, pp.position));
    }
    map.insert(transformed);
  }
  return res;
}

}  // namespace ilam
