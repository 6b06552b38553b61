#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace ilam {

/// Tangent-space element of a rigid transform: axis-angle rotation (rad)
/// and translation (m). Used as the 6-DOF local parameterization of
/// Se3Pose in all optimizers (rotation first, translation second).
struct Twist {
  Eigen::Vector3d rot = Eigen::Vector3d::Zero();
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();

  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << rot, trans;
    return v;
  }
  static Twist from_vector(const Eigen::Matrix<double, 6, 1>& v) {
    return Twist{v.head<3>(), v.tail<3>()};
  }
  double norm() const { return vector().norm(); }
};

/// Rigid transform in 3D. Rotation is kept as a normalized quaternion;
/// frame convention project-wide is x forward, y left, z up.
class Se3Pose {
 public:
  Se3Pose() : q_(Eigen::Quaterniond::Identity()), t_(Eigen::Vector3d::Zero()) {}
  Se3Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) : q_(q.normalized()), t_(t) {}
  Se3Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : q_(r), t_(t) { q_.normalize(); }

  static Se3Pose identity() { return Se3Pose(); }

  const Eigen::Quaterniond& rotation() const { return q_; }
  const Eigen::Vector3d& translation() const { return t_; }
  Eigen::Matrix3d rotation_matrix() const { return q_.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const;

  /// Rotation angle in [0, pi].
  double rotation_angle() const;

 private:
  Eigen::Quaterniond q_;
  Eigen::Vector3d t_;
};

/// Applies b then a: (a*b).x = a.(b.x).
Se3Pose compose(const Se3Pose& a, const Se3Pose& b);
Se3Pose inverse(const Se3Pose& p);
Eigen::Vector3d transform_point(const Se3Pose& p, const Eigen::Vector3d& x);

/// Rotation exponential/logarithm (axis-angle <-> quaternion).
Eigen::Quaterniond exp_so3(const Eigen::Vector3d& omega);
Eigen::Vector3d log_so3(const Eigen::Quaterniond& q);

/// Pose exponential/logarithm on the SO(3) x R^3 product manifold:
/// exp keeps the translation component verbatim, so exp(log(p)) == p
/// for any rotation angle < pi.
Se3Pose exp_se3(const Twist& xi);
Twist log_se3(const Se3Pose& p);

/// Left-multiplicative update used by every optimizer: exp(xi) * p.
Se3Pose apply_perturbation(const Twist& xi, const Se3Pose& p);

/// d(transform_point(exp(xi) * p, x)) / d(xi) at xi = 0.
/// Columns 0..2 are the rotational part, 3..5 the translational part.
Eigen::Matrix<double, 3, 6> transform_point_jacobian(const Se3Pose& p, const Eigen::Vector3d& x);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Closed-form weighted rigid alignment: returns the pose minimizing
/// sum_n w_n * |dst_n - (R src_n + T)|^2 via weighted centroid
/// subtraction and an orthogonal decomposition of the cross-covariance
/// with determinant correction.
///
/// Throws DegenerateConfiguration when fewer than 3 points are given or,
/// with require_rank2 set, when the weighted source covariance has
/// rank < 2. Registration callers keep the rank check; trajectory
/// evaluation disables it so collinear paths (straight corridors) still
/// align, the in-line rotation component then being arbitrary but
/// residual-neutral.
Se3Pose weighted_rigid_align(std::span<const Eigen::Vector3d> src,
                             std::span<const Eigen::Vector3d> dst,
                             std::span<const double> weights, bool require_rank2 = true);

}  // namespace ilam
