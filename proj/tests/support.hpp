#pragma once

// Shared test utilities: randomized inputs, independent oracles, and
// scratch-directory plumbing. Everything here is test-side code; nothing
// links back into library internals.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ilam/geometry.hpp"
#include "ilam/pose_graph.hpp"
#include "ilam/scan.hpp"

namespace testsupport {

inline Eigen::Vector3d random_unit(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Eigen::Vector3d random_point(std::mt19937& rng, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  return {u(rng), u(rng), u(rng)};
}

inline ilam::Se3Pose random_pose(std::mt19937& rng, double max_angle, double max_trans) {
  std::uniform_real_distribution<double> ua(0.0, max_angle);
  const Eigen::Vector3d axis = random_unit(rng);
  const Eigen::Quaterniond q(Eigen::AngleAxisd(ua(rng), axis));
  return ilam::Se3Pose(q, random_point(rng, max_trans));
}

inline double rotation_error(const ilam::Se3Pose& a, const ilam::Se3Pose& b) {
  return ilam::compose(ilam::inverse(a), b).rotation_angle();
}

inline double translation_error(const ilam::Se3Pose& a, const ilam::Se3Pose& b) {
  return (a.translation() - b.translation()).norm();
}

/// Brute-force k nearest neighbors with the same tie rule as the tree:
/// squared distance ascending, then lexicographic coordinates.
inline std::vector<Eigen::Vector3d> brute_knn(const std::vector<Eigen::Vector3d>& points,
                                              const Eigen::Vector3d& query, int k) {
  struct Entry {
    double d2;
    Eigen::Vector3d p;
  };
  std::vector<Entry> entries;
  entries.reserve(points.size());
  for (const auto& p : points) entries.push_back({(p - query).squaredNorm(), p});
  auto less = [](const Entry& a, const Entry& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.p.x() != b.p.x()) return a.p.x() < b.p.x();
    if (a.p.y() != b.p.y()) return a.p.y() < b.p.y();
    return a.p.z() < b.p.z();
  };
  const size_t take = std::min(points.size(), size_t(k));
  std::partial_sort(entries.begin(), entries.begin() + take, entries.end(), less);
  std::vector<Eigen::Vector3d> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(entries[i].p);
  return out;
}

/// Central finite differences of a twist-perturbed vector function at
/// the zero twist: column j is d f / d xi_j.
template <typename F>
Eigen::MatrixXd numeric_jacobian(const F& f, int out_dim, double step = 1e-6) {
  Eigen::MatrixXd jac(out_dim, 6);
  for (int j = 0; j < 6; ++j) {
    Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
    d(j) = step;
    const Eigen::VectorXd hi = f(ilam::Twist::from_vector(d));
    d(j) = -step;
    const Eigen::VectorXd lo = f(ilam::Twist::from_vector(d));
    jac.col(j) = (hi - lo) / (2.0 * step);
  }
  return jac;
}

/// Pose-graph cost of a vertex assignment, computed from geometry
/// primitives rather than the solver's internals.
inline double graph_cost(const std::vector<ilam::Se3Pose>& poses,
                         const std::vector<ilam::GraphEdge>& edges) {
  double cost = 0.0;
  for (const auto& e : edges) {
    const ilam::Se3Pose delta = ilam::compose(
        ilam::inverse(e.relative),
        ilam::compose(ilam::inverse(poses[size_t(e.from)]), poses[size_t(e.to)]));
    const Eigen::Matrix<double, 6, 1> r = ilam::log_se3(delta).vector();
    cost += r.dot(e.information * r);
  }
  return cost;
}

/// Dense nonlinear-least-squares oracle for small pose graphs: LM over
/// the stacked tangents of all non-fixed vertices, Jacobians by central
/// finite differences. Deliberately generic and slow.
inline std::vector<ilam::Se3Pose> dense_graph_solve(std::vector<ilam::Se3Pose> poses,
                                                    const std::vector<ilam::GraphEdge>& edges,
                                                    int fixed = 0) {
  const int nv = int(poses.size());
  std::vector<int> slot(size_t(nv), -1);
  int nvar = 0;
  for (int i = 0; i < nv; ++i) {
    if (i != fixed) slot[size_t(i)] = nvar++;
  }
  const int dim = 6 * nvar;

  auto residuals = [&](const std::vector<ilam::Se3Pose>& p) {
    Eigen::VectorXd r(6 * edges.size());
    for (size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      const ilam::Se3Pose delta =
          ilam::compose(ilam::inverse(e.relative),
                        ilam::compose(ilam::inverse(p[size_t(e.from)]), p[size_t(e.to)]));
      Eigen::Matrix<double, 6, 1> v = ilam::log_se3(delta).vector();
      // weight by the information square root so |r|^2 is the true cost
      Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(e.information);
      r.segment<6>(6 * long(k)) = llt.matrixU() * v;
    }
    return r;
  };
  auto apply = [&](const std::vector<ilam::Se3Pose>& p, const Eigen::VectorXd& step) {
    std::vector<ilam::Se3Pose> out = p;
    for (int i = 0; i < nv; ++i) {
      if (slot[size_t(i)] < 0) continue;
      const ilam::Twist xi = ilam::Twist::from_vector(step.segment<6>(6 * slot[size_t(i)]));
      out[size_t(i)] = ilam::apply_perturbation(xi, p[size_t(i)]);
    }
    return out;
  };

  double lambda = 1e-4;
  for (int iter = 0; iter < 400; ++iter) {
    const Eigen::VectorXd r0 = residuals(poses);
    Eigen::MatrixXd jac(r0.size(), dim);
    const double h = 1e-7;
    for (int j = 0; j < dim; ++j) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
      d(j) = h;
      const Eigen::VectorXd hi = residuals(apply(poses, d));
      d(j) = -h;
      const Eigen::VectorXd lo = residuals(apply(poses, d));
      jac.col(j) = (hi - lo) / (2.0 * h);
    }
    const Eigen::VectorXd g = jac.transpose() * r0;
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    bool stepped = false;
    for (int attempt = 0; attempt < 20 && !stepped; ++attempt) {
      Eigen::MatrixXd h_mat = jac.transpose() * jac;
      h_mat.diagonal().array() += lambda;
      const Eigen::VectorXd step = h_mat.ldlt().solve(-g);
      const std::vector<ilam::Se3Pose> trial = apply(poses, step);
      if (residuals(trial).squaredNorm() < r0.squaredNorm()) {
        poses = trial;
        lambda = std::max(lambda * 0.5, 1e-12);
        stepped = true;
        if (step.norm() < 1e-14) return poses;
      } else {
        lambda *= 4.0;
      }
    }
    if (!stepped) break;
  }
  return poses;
}

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    std::mt19937_64 rng(std::random_device{}());
    path_ = base / (tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Flat all-valid grid scan over a textured plane; ring r is a straight
/// line of equally spaced points, which makes the ring-smoothness value
/// of every interior point exactly zero.
inline ilam::OrganizedScan line_grid_scan(int rows, int cols, double spacing, double y,
                                          double z0, double dz, double intensity = 100.0) {
  ilam::OrganizedScan scan(rows, cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto& p = scan.at(r, c);
      p.x = (c - cols / 2) * spacing;
      p.y = y;
      p.z = z0 + r * dz;
      p.intensity = intensity;
      p.valid = true;
    }
  }
  return scan;
}

}  // namespace testsupport
