#include "ilam/geometry.hpp"

#include <cmath>

#include "ilam/errors.hpp"

namespace ilam {

Eigen::Matrix4d Se3Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = t_;
  return m;
}

double Se3Pose::rotation_angle() const {
  const double w = std::min(1.0, std::abs(q_.w()));
  return 2.0 * std::acos(w);
}

Se3Pose compose(const Se3Pose& a, const Se3Pose& b) {
  return Se3Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

Se3Pose inverse(const Se3Pose& p) {
  const Eigen::Quaterniond qi = p.rotation().conjugate();
  return Se3Pose(qi, qi * (-p.translation()));
}

Eigen::Vector3d transform_point(const Se3Pose& p, const Eigen::Vector3d& x) {
  return p.rotation() * x + p.translation();
}

Eigen::Quaterniond exp_so3(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  double half_sinc;  // sin(theta/2) / theta
  if (theta < 1e-8) {
    half_sinc = 0.5 - theta * theta / 48.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
  }
  Eigen::Quaterniond q(std::cos(0.5 * theta), half_sinc * omega.x(), half_sinc * omega.y(),
                       half_sinc * omega.z());
  q.normalize();
  return q;
}

Eigen::Vector3d log_so3(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Eigen::Vector3d v(q.x(), q.y(), q.z());
  const double s = v.norm();
  if (s < 1e-12) {
    return 2.0 * v;  // first-order: angle ~ 2 s
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return (theta / s) * v;
}

Se3Pose exp_se3(const Twist& xi) { return Se3Pose(exp_so3(xi.rot), xi.trans); }

Twist log_se3(const Se3Pose& p) { return Twist{log_so3(p.rotation()), p.translation()}; }

Se3Pose apply_perturbation(const Twist& xi, const Se3Pose& p) {
  return compose(exp_se3(xi), p);
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Matrix<double, 3, 6> transform_point_jacobian(const Se3Pose& p, const Eigen::Vector3d& x) {
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = -skew(transform_point(p, x));
  j.rightCols<3>() = Eigen::Matrix3d::Identity();
  return j;
}

Se3Pose weighted_rigid_align(std::span<const Eigen::Vector3d> src,
                             std::span<const Eigen::Vector3d> dst,
                             std::span<const double> weights, bool require_rank2) {
  if (src.size() != dst.size() || src.size() != weights.size()) {
    throw InvalidInput("weighted_rigid_align: size mismatch");
  }
  if (src.size() < 3) {
    throw DegenerateConfiguration("weighted_rigid_align: fewer than 3 points");
  }

  double wsum = 0.0;
  Eigen::Vector3d mu_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_dst = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    if (weights[i] < 0.0) throw InvalidInput("weighted_rigid_align: negative weight");
    wsum += weights[i];
    mu_src += weights[i] * src[i];
    mu_dst += weights[i] * dst[i];
  }
  if (wsum <= 0.0) throw DegenerateConfiguration("weighted_rigid_align: zero total weight");
  mu_src /= wsum;
  mu_dst /= wsum;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    h += weights[i] * (src[i] - mu_src) * (dst[i] - mu_dst).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (require_rank2 && (sv(0) <= 0.0 || sv(1) <= 1e-9 * sv(0))) {
    throw DegenerateConfiguration("weighted_rigid_align: source covariance rank < 2");
  }

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;  // flip the smallest singular direction
  }
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return Se3Pose(r, mu_dst - r * mu_src);
}

}  // namespace ilam
