#pragma once

// Continuous-time error-state models for attitude + gyro-bias estimation.
//
// Four error definitions share the 6-vector layout [attitude error; bias error]:
//   body   A(dq) = A(q) A(q_hat)^-1,  bias error  beta - beta_hat
//   ref    A(dq) = A(q_hat)^-1 A(q),  bias error  beta - beta_hat
//   right  chi chi_hat^-1 on SE(3),   bias error  dbeta - [beta_hat x] da
//   left   chi_hat^-1 chi on SE(3),   bias error  A(q_hat)^T dbeta
// The noise vector is w = (eta_v, eta_u): gyro white noise, then bias walk.

#include "mekf/attitude.hpp"

#include <functional>
#include <stdexcept>

namespace mekf {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

struct StateSpaceMatrices {
  Mat6 F = Mat6::Zero();
  Mat6 G = Mat6::Zero();
};

/// Gyro noise model: sigma_v is angle random walk (rad/s^1/2), sigma_u is
/// rate random walk (rad/s^3/2). Both are continuous-time PSD square roots.
struct NoiseConfig {
  double sigma_v = 0.0;
  double sigma_u = 0.0;

  Mat6 Q() const {
    if (sigma_v < 0.0 || sigma_u < 0.0) {
      throw std::invalid_argument("NoiseConfig: negative noise density");
    }
    Mat6 q = Mat6::Zero();
    q.topLeftCorner<3, 3>().diagonal().setConstant(sigma_v * sigma_v);
    q.bottomRightCorner<3, 3>().diagonal().setConstant(sigma_u * sigma_u);
    return q;
  }
};

/// Measurement triple after the innovation transformation A_pred^T (.)
struct TransformedMeasurement {
  Mat36 H = Mat36::Zero();
  Vec3 innovation = Vec3::Zero();
  Mat3 R = Mat3::Zero();
};

namespace detail {
inline Mat6 blocks(const Mat3& a, const Mat3& b, const Mat3& c, const Mat3& d) {
  Mat6 m;
  m << a, b, c, d;
  return m;
}
inline Mat36 attitude_row(const Mat3& a) {
  Mat36 h = Mat36::Zero();
  h.leftCols<3>() = a;
  return h;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Group-affine property check
// ---------------------------------------------------------------------------

/// Dynamics on a matrix group: f(chi) for a fixed input captured by the callable.
using GroupDynamics = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// || f(x1 x2) - f(x1) x2 - x1 f(x2) + x1 f(I) x2 ||_F. Zero iff the dynamics
/// is group affine for this pair.
inline double group_affine_residual(const GroupDynamics& f, const Eigen::MatrixXd& x1,
                                    const Eigen::MatrixXd& x2) {
  if (x1.rows() != x1.cols() || x2.rows() != x2.cols() || x1.rows() != x2.rows()) {
    throw std::invalid_argument("group_affine_residual: element dimension mismatch");
  }
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(x1.rows(), x1.cols());
  const Eigen::MatrixXd r = f(x1 * x2) - f(x1) * x2 - x1 * f(x2) + x1 * f(id) * x2;
  return r.norm();
}

/// A_dot = -[omega x] A
inline GroupDynamics so3_kinematics(const Vec3& omega) {
  const Eigen::MatrixXd w = skew(omega);
  return [w](const Eigen::MatrixXd& a) -> Eigen::MatrixXd { return -w * a; };
}

/// The SE(3) embedding of attitude + bias with A_dot = -[omega x] A and a
/// constant bias, acting on the homogeneous 4x4 matrix.
inline GroupDynamics se3_attitude_bias_kinematics(const Vec3& omega) {
  const Mat3 w = skew(omega);
  return [w](const Eigen::MatrixXd& chi) -> Eigen::MatrixXd {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 4);
    d.topLeftCorner<3, 3>() = -w * chi.topLeftCorner<3, 3>();
    return d;
  };
}

/// As above but driven by the raw gyro reading, A_dot = -[(omega_meas - beta) x] A.
inline GroupDynamics se3_measured_rate_kinematics(const Vec3& omega_meas) {
  return [omega_meas](const Eigen::MatrixXd& chi) -> Eigen::MatrixXd {
    const Vec3 beta = chi.topRightCorner<3, 1>();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 4);
    d.topLeftCorner<3, 3>() = -skew(omega_meas - beta) * chi.topLeftCorner<3, 3>();
    return d;
  };
}

// ---------------------------------------------------------------------------
// Body-frame attitude error
// ---------------------------------------------------------------------------

inline StateSpaceMatrices build_body(const Vec3& omega_hat) {
  const Mat3 z = Mat3::Zero();
  const Mat3 i = Mat3::Identity();
  return {detail::blocks(-skew(omega_hat), -i, z, z), detail::blocks(-i, z, z, i)};
}

/// H = [ (A_pred r) x , 0 ]; depends on the attitude prediction.
inline Mat36 build_h_body_traj(const RotationMatrix& a_pred, const Vec3& r) {
  return detail::attitude_row(skew(a_pred * r));
}

/// H = [ b_meas x , 0 ]; uses the measured body vector in place of A_pred r,
/// so no state estimate enters.
inline Mat36 build_h_body_invariant(const Vec3& b_measured) {
  return detail::attitude_row(skew(b_measured));
}

// ---------------------------------------------------------------------------
// Reference-frame attitude error
// ---------------------------------------------------------------------------

inline StateSpaceMatrices build_ref(const RotationMatrix& a_hat) {
  const Mat3 z = Mat3::Zero();
  const Mat3 at = a_hat.transpose();
  return {detail::blocks(z, -at, z, z), detail::blocks(-at, z, z, Mat3::Identity())};
}

/// H = [ A_pred [r x] , 0 ], algebraically equal to [ (A_pred r) x ] A_pred.
inline Mat36 build_h_ref_traj(const RotationMatrix& a_pred, const Vec3& r) {
  return detail::attitude_row(a_pred * skew(r));
}

/// Multiplies the reference-error measurement model by A_pred^T: the matrix
/// becomes [ r x , 0 ], the innovation A_pred^T b - r and the covariance
/// A_pred^T R A_pred. The resulting Kalman update is unchanged.
inline TransformedMeasurement build_h_ref_invariant(const RotationMatrix& a_pred,
                                                    const Vec3& b_measured, const Vec3& r,
                                                    const Mat3& R) {
  const Mat3 at = a_pred.transpose();
  TransformedMeasurement m;
  m.H = detail::attitude_row(skew(r));
  // Same as A_pred^T b - r, written so that b == A_pred r gives exactly zero.
  m.innovation = at * (b_measured - a_pred * r);
  m.R = at * R * a_pred;
  m.R = 0.5 * (m.R + m.R.transpose()).eval();
  return m;
}

// ---------------------------------------------------------------------------
// SE(3) formulations
// ---------------------------------------------------------------------------

/// Right group error. Pair with build_h_body_traj / build_h_body_invariant.
inline StateSpaceMatrices build_right_se3(const Vec3& omega_hat, const Vec3& beta_hat) {
  const Mat3 wx = skew(omega_hat);
  const Mat3 bx = skew(beta_hat);
  const Mat3 i = Mat3::Identity();
  return {detail::blocks(-wx, -i, bx * wx, bx), detail::blocks(-i, Mat3::Zero(), bx, i)};
}

/// Left group error. Pair with build_h_ref_traj / build_h_ref_invariant.
inline StateSpaceMatrices build_left_se3(const RotationMatrix& a_hat, const Vec3& omega_hat) {
  const Mat3 z = Mat3::Zero();
  const Mat3 at = a_hat.transpose();
  return {detail::blocks(z, -Mat3::Identity(), z, skew(at * omega_hat)),
          detail::blocks(-at, z, z, at)};
}

}  // namespace mekf
