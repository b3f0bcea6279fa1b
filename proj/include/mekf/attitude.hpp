#pragma once

/**
 * @file attitude.hpp
 * @brief Rotation and rigid-transform primitives used by the attitude filters.
 *
 * QUATERNION CONVENTION
 * =====================
 * Quaternions are stored vector-first / scalar-last: q = [qx, qy, qz, qw].
 * The identity is (0, 0, 0, 1).
 *
 * The attitude matrix A(q) maps REFERENCE-frame vectors into BODY-frame
 * vectors (b = A r). This is the transpose of the body-to-reference
 * convention used by many robotics libraries, so be careful when mixing.
 *
 *   A(q) = (qw^2 - |qv|^2) I + 2 qv qv^T - 2 qw [qv x]
 *
 * Composition is ordered so that A(p ⊗ q) = A(p) A(q), and a small rotation
 * vector da maps to A(exp_quat(da)) ≈ I - [da x].
 *
 * Every quaternion-returning operation renormalizes and canonicalizes the
 * sign so that qw >= 0.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mekf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Reference-to-body rotation matrix. Kept as a plain Eigen matrix; use
/// is_rotation() to validate inputs at module boundaries.
using RotationMatrix = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDeg = kPi / 180.0;
/// One degree per hour in rad/s.
inline constexpr double kDegPerHour = kDeg / 3600.0;

/// Below this angle exp_quat switches to its series limit.
inline constexpr double kSmallAngle = 1e-8;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline bool is_rotation(const Mat3& a, double tol = 1e-10) {
  return a.allFinite() &&
         (a.transpose() * a - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(a.determinant() - 1.0) < tol;
}

class UnitQuaternion {
 public:
  UnitQuaternion() : q_(0.0, 0.0, 0.0, 1.0) {}

  /// Normalizes and canonicalizes the input. Throws on zero or non-finite.
  UnitQuaternion(const Vec3& vec, double scalar) : q_(vec.x(), vec.y(), vec.z(), scalar) {
    normalize();
  }
  explicit UnitQuaternion(const Vec4& xyzw) : q_(xyzw) { normalize(); }

  static UnitQuaternion identity() { return {}; }

  Vec3 vec() const { return q_.head<3>(); }
  double scalar() const { return q_.w(); }
  const Vec4& coeffs() const { return q_; }

  UnitQuaternion conjugate() const { return UnitQuaternion(-vec(), scalar()); }

  /// A(q): reference-to-body attitude matrix.
  RotationMatrix matrix() const {
    const Vec3 v = vec();
    const double w = scalar();
    return (w * w - v.squaredNorm()) * Mat3::Identity() + 2.0 * v * v.transpose() -
           2.0 * w * skew(v);
  }

  bool operator==(const UnitQuaternion& other) const { return q_ == other.q_; }

 private:
  void normalize() {
    const double n = q_.norm();
    if (!std::isfinite(n) || n == 0.0) {
      throw std::invalid_argument("UnitQuaternion: zero or non-finite coefficients");
    }
    q_ /= n;
    if (q_.w() < 0.0) q_ = -q_;
  }

  Vec4 q_;
};

/// a ⊗ b with A(a ⊗ b) = A(a) A(b).
inline UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  const Vec3 av = a.vec();
  const Vec3 bv = b.vec();
  const double aw = a.scalar();
  const double bw = b.scalar();
  return UnitQuaternion(aw * bv + bw * av - av.cross(bv), aw * bw - av.dot(bv));
}

inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_multiply(a, b);
}

inline RotationMatrix quat_to_matrix(const UnitQuaternion& q) { return q.matrix(); }

/// Rotation vector -> quaternion: [alpha/|alpha| sin(|alpha|/2); cos(|alpha|/2)].
inline UnitQuaternion exp_quat(const Vec3& alpha) {
  const double angle = alpha.norm();
  if (angle < kSmallAngle) {
    return UnitQuaternion(0.5 * alpha, 1.0);
  }
  return UnitQuaternion(alpha * (std::sin(0.5 * angle) / angle), std::cos(0.5 * angle));
}

/// Inverse of exp_quat on the canonical hemisphere; angle in [0, pi].
inline Vec3 log_quat(const UnitQuaternion& q) {
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 0.5 * kSmallAngle) return 2.0 * v;
  return v * (2.0 * std::atan2(s, q.scalar()) / s);
}

/// Geodesic angle between two attitudes, in [0, pi].
inline double rotation_angle_between(const UnitQuaternion& a, const UnitQuaternion& b) {
  return log_quat(a * b.conjugate()).norm();
}

/// Active rotation exp([phi x]) via Rodrigues' formula. Equals A(exp_quat(phi))^T.
inline Mat3 rotation_exp(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = skew(phi);
  if (angle < kSmallAngle) return Mat3::Identity() + k + 0.5 * k * k;
  return Mat3::Identity() + (std::sin(angle) / angle) * k +
         ((1.0 - std::cos(angle)) / (angle * angle)) * k * k;
}

/// Recover a unit quaternion from a proper orthogonal matrix (Shepperd).
inline UnitQuaternion matrix_to_quat(const RotationMatrix& a) {
  // Invert A(q) = (w^2-|v|^2)I + 2vv^T - 2w[v x].
  const double tr = a.trace();
  Vec4 q;
  if (tr > a(0, 0) && tr > a(1, 1) && tr > a(2, 2)) {
    const double w = 0.5 * std::sqrt(1.0 + tr);
    q << (a(1, 2) - a(2, 1)) / (4.0 * w), (a(2, 0) - a(0, 2)) / (4.0 * w),
        (a(0, 1) - a(1, 0)) / (4.0 * w), w;
  } else {
    int i = 0;
    if (a(1, 1) > a(i, i)) i = 1;
    if (a(2, 2) > a(i, i)) i = 2;
    const int j = (i + 1) % 3;
    const int k = (i + 2) % 3;
    const double vi = 0.5 * std::sqrt(1.0 + 2.0 * a(i, i) - tr);
    q(i) = vi;
    q(j) = (a(i, j) + a(j, i)) / (4.0 * vi);
    q(k) = (a(i, k) + a(k, i)) / (4.0 * vi);
    q(3) = (a(j, k) - a(k, j)) / (4.0 * vi);
  }
  return UnitQuaternion(q);
}

/// 3-2-1 (yaw, pitch, roll) angles of a reference-to-body matrix, radians.
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  /// Set when |pitch| is within 1e-6 rad of 90 deg; yaw and roll are then
  /// not separable and the returned split is arbitrary.
  bool gimbal_lock = false;

  Vec3 as_vector() const { return {yaw, pitch, roll}; }
};

/// A = R1(roll) R2(pitch) R3(yaw), each a passive (frame) rotation.
inline RotationMatrix euler_to_matrix(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  RotationMatrix a;
  a << cp * cy, cp * sy, -sp,
       sr * sp * cy - cr * sy, sr * sp * sy + cr * cy, sr * cp,
       cr * sp * cy + sr * sy, cr * sp * sy - sr * cy, cr * cp;
  return a;
}

inline RotationMatrix euler_to_matrix(const EulerAngles& e) {
  return euler_to_matrix(e.yaw, e.pitch, e.roll);
}

inline EulerAngles matrix_to_euler(const RotationMatrix& a) {
  EulerAngles e;
  const double s = std::clamp(-a(0, 2), -1.0, 1.0);
  e.pitch = std::asin(s);
  e.gimbal_lock = std::abs(std::abs(e.pitch) - 0.5 * kPi) < 1e-6;
  if (e.gimbal_lock) {
    // Only yaw -/+ roll is defined; report it all as yaw.
    e.roll = 0.0;
    e.yaw = std::atan2(-a(1, 0), a(1, 1));
  } else {
    e.yaw = std::atan2(a(0, 1), a(0, 0));
    e.roll = std::atan2(a(1, 2), a(2, 2));
  }
  return e;
}

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

/// Element of SE(3) packing attitude and gyro bias:
///   [ A  beta ]
///   [ 0   1   ]
struct SE3Element {
  RotationMatrix rotation = RotationMatrix::Identity();
  Vec3 translation = Vec3::Zero();

  static SE3Element identity() { return {}; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static SE3Element from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }
};

inline SE3Element se3_compose(const SE3Element& a, const SE3Element& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline SE3Element se3_inverse(const SE3Element& a) {
  const Mat3 rt = a.rotation.transpose();
  return {rt, -rt * a.translation};
}

/// chi * chi_hat^-1
inline SE3Element se3_right_error(const SE3Element& chi, const SE3Element& chi_hat) {
  return se3_compose(chi, se3_inverse(chi_hat));
}

/// chi_hat^-1 * chi
inline SE3Element se3_left_error(const SE3Element& chi, const SE3Element& chi_hat) {
  return se3_compose(se3_inverse(chi_hat), chi);
}

}  // namespace mekf
