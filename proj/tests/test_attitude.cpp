#include "mekf/attitude.hpp"
#include "mekf/checks.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mekf;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

Mat3 rodrigues(const Vec3& axis_angle) {
  const double th = axis_angle.norm();
  const Vec3 k = axis_angle / th;
  // Passive rotation by th about k (reference -> body).
  return std::cos(th) * Mat3::Identity() + (1.0 - std::cos(th)) * k * k.transpose() -
         std::sin(th) * skew(k);
}

}  // namespace

TEST(Skew, ZeroVectorGivesZeroMatrix) { EXPECT_EQ(skew(Vec3::Zero()), Mat3::Zero()); }

TEST(Skew, MatchesCrossProduct) {
  EXPECT_EQ(skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0), Vec3(0, 0, 1));
  const Vec3 v(1, 2, 3);
  EXPECT_EQ(skew(v) * v, Vec3::Zero());
  const Mat3 m = skew(v);
  EXPECT_EQ(m + m.transpose(), Mat3::Zero());
  const Vec3 w(-0.5, 4.0, 2.0);
  EXPECT_LT((skew(v) * w - v.cross(w)).norm(), 1e-15);
}

TEST(UnitQuaternion, IdentityIsScalarLast) {
  const UnitQuaternion q;
  EXPECT_EQ(q.coeffs(), Vec4(0, 0, 0, 1));
}

TEST(UnitQuaternion, RejectsZeroAndNonFinite) {
  EXPECT_THROW(UnitQuaternion(Vec4::Zero()), std::invalid_argument);
  EXPECT_THROW(UnitQuaternion(Vec3(std::nan(""), 0, 0), 1.0), std::invalid_argument);
}

TEST(UnitQuaternion, CanonicalSign) {
  const UnitQuaternion q(Vec3(0.1, 0.2, 0.3), -0.9);
  EXPECT_GE(q.scalar(), 0.0);
  EXPECT_NEAR(q.coeffs().norm(), 1.0, 1e-15);
}

TEST(QuatMultiply, IdentityAndInverse) {
  std::mt19937_64 rng(1);
  const UnitQuaternion q = random_quaternion(rng);
  EXPECT_LT(((UnitQuaternion::identity() * q).coeffs() - q.coeffs()).norm(), 1e-15);
  EXPECT_LT(((q * q.conjugate()).coeffs() - Vec4(0, 0, 0, 1)).norm(), 1e-15);
}

TEST(QuatMultiply, MatrixHomomorphismOverRandomPairs) {
  std::mt19937_64 rng(2);
  double worst = 0.0, norm_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const UnitQuaternion a = random_quaternion(rng);
    const UnitQuaternion b = random_quaternion(rng);
    const UnitQuaternion ab = a * b;
    worst = std::max(worst, max_abs(ab.matrix() - a.matrix() * b.matrix()));
    norm_dev = std::max(norm_dev, std::abs(ab.coeffs().norm() - 1.0));
  }
  EXPECT_LT(worst, 1e-12);
  EXPECT_LT(norm_dev, 1e-12);
}

TEST(ExpQuat, ZeroAndHalfTurn) {
  EXPECT_EQ(exp_quat(Vec3::Zero()).coeffs(), Vec4(0, 0, 0, 1));
  const UnitQuaternion q = exp_quat(Vec3(kPi, 0, 0));
  EXPECT_NEAR(q.coeffs()(0), 1.0, 1e-15);
  EXPECT_NEAR(q.coeffs()(3), 0.0, 1e-15);
}

TEST(ExpQuat, MatchesRodrigues) {
  const Vec3 a(0.1, 0.2, 0.3);
  EXPECT_LT(max_abs(exp_quat(a).matrix() - rodrigues(a)), 1e-12);
  EXPECT_LT(max_abs(rotation_exp(a) - rodrigues(a).transpose()), 1e-12);
}

TEST(ExpQuat, SeriesBranchIsContinuous) {
  const Vec3 a(3e-9, -2e-9, 1e-9);
  const UnitQuaternion q = exp_quat(a);
  EXPECT_LT((q.vec() - 0.5 * a).norm(), 1e-20);
  const Vec3 b = a * (1.0 + 1e-3) * (kSmallAngle / a.norm());
  EXPECT_LT((exp_quat(b).vec() - 0.5 * b).norm(), 1e-20);
}

TEST(ExpQuat, FirstOrderErrorConvention) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 d = 1e-3 * gaussian3(rng).normalized() * std::uniform_real_distribution<>(0, 1)(rng);
    const double dev = (exp_quat(d).matrix() - (Mat3::Identity() - skew(d))).norm();
    EXPECT_LE(dev, d.squaredNorm());
  }
}

TEST(LogQuat, InvertsExp) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    Vec3 a = gaussian3(rng);
    if (a.norm() >= kPi) a *= 3.0 / a.norm();
    EXPECT_LT((log_quat(exp_quat(a)) - a).norm(), 1e-12);
  }
}

TEST(QuatToMatrix, KnownCases) {
  EXPECT_LT(max_abs(UnitQuaternion().matrix() - Mat3::Identity()), 1e-15);
  const Mat3 a = UnitQuaternion(Vec4(1, 0, 0, 0)).matrix();
  EXPECT_LT(max_abs(a - Vec3(1, -1, -1).asDiagonal().toDenseMatrix()), 1e-15);
}

TEST(QuatToMatrix, RandomIsRotation) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = random_quaternion(rng).matrix();
    EXPECT_LT(max_abs(a.transpose() * a - Mat3::Identity()), 1e-12);
    EXPECT_NEAR(a.determinant(), 1.0, 1e-12);
  }
}

TEST(MatrixToQuat, RoundTripIncludingNearHalfTurns) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion q = random_quaternion(rng);
    EXPECT_LT((matrix_to_quat(q.matrix()).coeffs() - q.coeffs()).norm(), 1e-12);
  }
  for (const Vec3& axis : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}) {
    const UnitQuaternion q = exp_quat(kPi * axis);
    EXPECT_LT(max_abs(matrix_to_quat(q.matrix()).matrix() - q.matrix()), 1e-12);
  }
}

TEST(Euler, IdentityIsZero) {
  const EulerAngles e = matrix_to_euler(Mat3::Identity());
  EXPECT_EQ(e.as_vector(), Vec3::Zero());
  EXPECT_FALSE(e.gimbal_lock);
}

TEST(Euler, YawRoundTrip) {
  const EulerAngles e = matrix_to_euler(euler_to_matrix(30 * kDeg, 0, 0));
  EXPECT_NEAR(e.yaw, 30 * kDeg, 1e-12);
  EXPECT_NEAR(e.pitch, 0.0, 1e-12);
  EXPECT_NEAR(e.roll, 0.0, 1e-12);
}

TEST(Euler, RandomRoundTripAwayFromLock) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-kPi + 1e-3, kPi), pitch(-89 * kDeg, 89 * kDeg);
  for (int i = 0; i < 500; ++i) {
    const double y = ang(rng), p = pitch(rng), r = ang(rng);
    const EulerAngles e = matrix_to_euler(euler_to_matrix(y, p, r));
    EXPECT_NEAR(e.yaw, y, 1e-9);
    EXPECT_NEAR(e.pitch, p, 1e-12);
    EXPECT_NEAR(e.roll, r, 1e-9);
  }
}

TEST(Euler, MatrixIsProductOfElementaryPassiveRotations) {
  const double y = 0.3, p = -0.2, r = 1.1;
  const Mat3 expected =
      exp_quat(Vec3(r, 0, 0)).matrix() * exp_quat(Vec3(0, p, 0)).matrix() * exp_quat(Vec3(0, 0, y)).matrix();
  EXPECT_LT(max_abs(euler_to_matrix(y, p, r) - expected), 1e-15);
}

TEST(Euler, GimbalLockFlagged) {
  const EulerAngles e = matrix_to_euler(euler_to_matrix(0.4, 90 * kDeg, 0.1));
  EXPECT_TRUE(e.gimbal_lock);
  // The remaining angle still reproduces the matrix.
  EXPECT_LT(max_abs(euler_to_matrix(e) - euler_to_matrix(0.4, 90 * kDeg, 0.1)), 1e-9);
}

TEST(WrapAngle, HalfOpenInterval) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_NEAR(wrap_angle(-7.0), -7.0 + 2 * kPi, 1e-15);
}

TEST(SE3, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(8);
  const SE3Element a{random_quaternion(rng).matrix(), gaussian3(rng)};
  const SE3Element e = se3_compose(a, se3_inverse(a));
  EXPECT_LT(max_abs(e.matrix() - Mat4::Identity()), 1e-15);
  EXPECT_EQ(a.matrix().row(3), Eigen::RowVector4d(0, 0, 0, 1));
}

TEST(SE3, MatchesHomogeneousProduct) {
  std::mt19937_64 rng(9);
  const SE3Element a{random_quaternion(rng).matrix(), gaussian3(rng)};
  const SE3Element b{random_quaternion(rng).matrix(), gaussian3(rng)};
  EXPECT_LT(max_abs(se3_compose(a, b).matrix() - a.matrix() * b.matrix()), 1e-15);
  EXPECT_LT(max_abs(se3_inverse(a).matrix() - a.matrix().inverse()), 1e-12);
}

TEST(SE3, Associativity) {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const SE3Element a{random_quaternion(rng).matrix(), gaussian3(rng)};
    const SE3Element b{random_quaternion(rng).matrix(), gaussian3(rng)};
    const SE3Element c{random_quaternion(rng).matrix(), gaussian3(rng)};
    worst = std::max(worst, max_abs(se3_compose(se3_compose(a, b), c).matrix() -
                                    se3_compose(a, se3_compose(b, c)).matrix()));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(SE3, RightAndLeftErrorBiasSlots) {
  std::mt19937_64 rng(11);
  const Mat3 a = random_quaternion(rng).matrix(), ah = random_quaternion(rng).matrix();
  const Vec3 b = gaussian3(rng), bh = gaussian3(rng);
  const SE3Element right = se3_right_error({a, b}, {ah, bh});
  EXPECT_LT((right.translation - (b - a * ah.transpose() * bh)).norm(), 1e-12);
  EXPECT_LT(max_abs(right.rotation - a * ah.transpose()), 1e-12);
  const SE3Element left = se3_left_error({a, b}, {ah, bh});
  EXPECT_LT((left.translation - ah.transpose() * (b - bh)).norm(), 1e-12);
  EXPECT_LT(max_abs(left.rotation - ah.transpose() * a), 1e-12);
}
