#include "ilam/pose_graph.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

constexpr int kMaxIterations = 50;
constexpr double kGradientTol = 1e-8;
constexpr double kStepTol = 1e-10;
constexpr double kLambdaInit = 1e-6;

// Inverse right Jacobian of SO(3).
Eigen::Matrix3d jr_inv(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d S = skew(phi);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + 0.5 * S + (1.0 / 12.0) * S * S;
  }
  const double s = std::sin(theta);
  double coeff;
  if (std::abs(s) < 1e-12) {
    coeff = 1.0 / (theta * theta);  // theta == pi limit
  } else {
    coeff = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * s);
  }
  return Eigen::Matrix3d::Identity() + 0.5 * S + coeff * S * S;
}

void check_information(const Eigen::Matrix<double, 6, 6>& info) {
  if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw NotPositiveDefinite("edge information matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(info);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw NotPositiveDefinite("edge information matrix has a non-positive eigenvalue");
  }
}

void check_connected(size_t n_vertices, std::span<const GraphEdge> edges) {
  if (n_vertices == 0) return;
  std::vector<int> parent(n_vertices);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[size_t(x)] != x) {
      parent[size_t(x)] = parent[size_t(parent[size_t(x)])];
      x = parent[size_t(x)];
    }
    return x;
  };
  for (const auto& e : edges) {
    parent[size_t(find(e.from))] = find(e.to);
  }
  const int root = find(0);
  for (size_t i = 1; i < n_vertices; ++i) {
    if (find(int(i)) != root) {
      throw DisconnectedGraph("pose graph has more than one connected component");
    }
  }
}

double graph_cost(const std::vector<Se3Pose>& poses, std::span<const GraphEdge> edges) {
  double cost = 0.0;
  for (const auto& e : edges) {
    const Eigen::Matrix<double, 6, 1> r =
        edge_residual(e, poses[size_t(e.from)], poses[size_t(e.to)]).vector();
    cost += r.dot(e.information * r);
  }
  return cost;
}

}  // namespace

bool maybe_keyframe(const Se3Pose& pose, const Se3Pose& last_kf_pose, int matched_count,
                    const Config& cfg) {
  const Se3Pose rel = compose(inverse(last_kf_pose), pose);
  return rel.translation().norm() > cfg.kf_dist || rel.rotation_angle() > cfg.kf_angle ||
         matched_count < cfg.kf_min_matches;
}

Twist edge_residual(const GraphEdge& edge, const Se3Pose& pose_from, const Se3Pose& pose_to) {
  return log_se3(compose(inverse(edge.relative), compose(inverse(pose_from), pose_to)));
}

Eigen::Matrix<double, 6, 6> edge_jacobian_to(const GraphEdge& edge, const Se3Pose& pose_from,
                                             const Se3Pose& pose_to) {
  const Twist r = edge_residual(edge, pose_from, pose_to);
  const Eigen::Matrix3d Rt = pose_to.rotation_matrix();
  const Eigen::Matrix3d A =
      (edge.relative.rotation().conjugate() * pose_from.rotation().conjugate()).toRotationMatrix();
  Eigen::Matrix<double, 6, 6> J;
  J.setZero();
  J.block<3, 3>(0, 0) = jr_inv(r.rot) * Rt.transpose();
  J.block<3, 3>(3, 0) = -A * skew(pose_to.translation());
  J.block<3, 3>(3, 3) = A;
  return J;
}

std::vector<Se3Pose> optimize_graph(std::vector<Se3Pose> vertices,
                                    std::span<const GraphEdge> edges,
                                    std::span<const int> fixed) {
  const int n = int(vertices.size());
  if (n == 0) return vertices;
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n || e.from == e.to) {
      throw InvalidInput("pose graph edge references a bad vertex");
    }
    check_information(e.information);
  }
  check_connected(size_t(n), edges);

  std::vector<int> slot(size_t(n), -1);
  {
    std::vector<uint8_t> is_fixed(size_t(n), 0);
    if (fixed.empty()) {
      is_fixed[0] = 1;
    } else {
      for (int f : fixed) {
        if (f < 0 || f >= n) throw InvalidInput("fixed vertex out of range");
        is_fixed[size_t(f)] = 1;
      }
    }
    int next = 0;
    for (int i = 0; i < n; ++i) {
      if (!is_fixed[size_t(i)]) slot[size_t(i)] = 6 * next++;
    }
  }
  const int dim = [&] {
    int d = 0;
    for (int s : slot) d = std::max(d, s + 6);
    return d;
  }();
  if (dim == 0) return vertices;  // everything fixed

  double lambda = kLambdaInit;
  double cost = graph_cost(vertices, edges);
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(edges.size() * 144);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& e : edges) {
      const Eigen::Matrix<double, 6, 1> r =
          edge_residual(e, vertices[size_t(e.from)], vertices[size_t(e.to)]).vector();
      const Eigen::Matrix<double, 6, 6> Jt =
          edge_jacobian_to(e, vertices[size_t(e.from)], vertices[size_t(e.to)]);
      const int st = slot[size_t(e.to)];
      const int sf = slot[size_t(e.from)];
      const Eigen::Matrix<double, 6, 6> JtW = Jt.transpose() * e.information;
      if (st >= 0) {
        const Eigen::Matrix<double, 6, 6> Htt = JtW * Jt;
        for (int a = 0; a < 6; ++a)
          for (int b = 0; b < 6; ++b) triplets.emplace_back(st + a, st + b, Htt(a, b));
        g.segment<6>(st) += JtW * r;
      }
      if (sf >= 0) {
        // J_from = -J_to, so its blocks reuse the same products.
        const Eigen::Matrix<double, 6, 6> Hff = JtW * Jt;
        for (int a = 0; a < 6; ++a)
          for (int b = 0; b < 6; ++b) triplets.emplace_back(sf + a, sf + b, Hff(a, b));
        g.segment<6>(sf) -= JtW * r;
      }
      if (st >= 0 && sf >= 0) {
        const Eigen::Matrix<double, 6, 6> Htf = -(JtW * Jt);
        for (int a = 0; a < 6; ++a) {
          for (int b = 0; b < 6; ++b) {
            triplets.emplace_back(st + a, sf + b, Htf(a, b));
            triplets.emplace_back(sf + a, st + b, Htf(b, a));
          }
        }
      }
    }
    if (g.norm() < kGradientTol) break;

    bool accepted = false;
    for (int attempt = 0; attempt < 10; ++attempt) {
      std::vector<Eigen::Triplet<double>> damped = triplets;
      for (int i = 0; i < dim; ++i) damped.emplace_back(i, i, lambda);
      Eigen::SparseMatrix<double> H(dim, dim);
      H.setFromTriplets(damped.begin(), damped.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(H);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(-g);
      std::vector<Se3Pose> candidate = vertices;
      for (int i = 0; i < n; ++i) {
        if (slot[size_t(i)] >= 0) {
          candidate[size_t(i)] = apply_perturbation(
              Twist::from_vector(delta.segment<6>(slot[size_t(i)])), candidate[size_t(i)]);
        }
      }
      const double cand_cost = graph_cost(candidate, edges);
      if (cand_cost < cost) {
        vertices = std::move(candidate);
        cost = cand_cost;
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
        if (delta.norm() < kStepTol) iter = kMaxIterations;  // converged
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  return vertices;
}

int PoseGraph::add_vertex(const Se3Pose& pose) {
  const int id = int(poses_.size());
  poses_.push_back(pose);
  if (id > 0) {
    GraphEdge e;
    e.from = id - 1;
    e.to = id;
    e.relative = compose(inverse(poses_[size_t(id - 1)]), pose);
    e.information.setIdentity();
    e.kind = GraphEdge::Kind::kOdometry;
    edges_.push_back(e);
  }
  return id;
}

void PoseGraph::add_edge(const GraphEdge& edge) {
  if (edge.from < 0 || edge.from >= int(poses_.size()) || edge.to < 0 ||
      edge.to >= int(poses_.size()) || edge.from == edge.to) {
    throw InvalidInput("pose graph edge references a bad vertex");
  }
  check_information(edge.information);
  edges_.push_back(edge);
}

Se3Pose PoseGraph::on_loop(const LoopCandidate& candidate,
                           const Eigen::Matrix<double, 6, 6>& information) {
  GraphEdge e;
  e.from = candidate.match_id;
  e.to = candidate.query_id;
  e.relative = candidate.relative;
  e.information = information;
  e.kind = GraphEdge::Kind::kLoop;
  add_edge(e);

  const Se3Pose previous_latest = poses_.back();
  poses_ = optimize_graph(std::move(poses_), edges_);
  return compose(poses_.back(), inverse(previous_latest));
}

void PoseGraph::dump(std::ostream& os) const {
  for (size_t i = 0; i < poses_.size(); ++i) {
    const auto& p = poses_[i];
    const auto& q = p.rotation();
    os << "VERTEX_SE3:QUAT " << i << ' ' << p.translation().x() << ' ' << p.translation().y()
       << ' ' << p.translation().z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
       << q.w() << '\n';
  }
  for (const auto& e : edges_) {
    const auto& p = e.relative;
    const auto& q = p.rotation();
    os << "EDGE_SE3:QUAT " << e.from << ' ' << e.to << ' ' << p.translation().x() << ' '
       << p.translation().y() << ' ' << p.translation().z() << ' ' << q.x() << ' ' << q.y() << ' '
       << q.z() << ' ' << q.w();
    for (int a = 0; a < 6; ++a) {
      for (int b = a; b < 6; ++b) os << ' ' << e.information(a, b);
    }
    os << '\n';
  }
}

}  // namespace ilam
