#pragma once

// Property checks shared by the `check` command and the test suite. Each
// returns the measured quantity next to its threshold.

#include "mekf/attitude.hpp"
#include "mekf/error_models.hpp"
#include "mekf/filter.hpp"
#include "mekf/spacecraft_sim.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace mekf {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  /// "<" when value must stay below threshold, ">" when above.
  char relation = '<';

  std::string line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: %s (%s %.3g %c %.3g)", name.c_str(),
                  passed ? "PASS" : "FAIL", relation == '<' ? "residual" : "min residual",
                  value, relation, threshold);
    return buf;
  }
};

inline UnitQuaternion random_quaternion(std::mt19937_64& rng) {
  // Normalized 4-D Gaussian is uniform on the sphere.
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 v;
  do {
    v = Vec4(n(rng), n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return UnitQuaternion(v);
}

inline Mat3 random_spd3(std::mt19937_64& rng, double scale) {
  const Mat3 m = Mat3::NullaryExpr([&] { return std::normal_distribution<double>(0.0, 1.0)(rng); });
  return scale * (m * m.transpose() + 0.1 * Mat3::Identity());
}

inline CheckResult check_group_affine_so3(int trials = 1000, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    const Vec3 w = gaussian3(rng);
    worst = std::max(worst, group_affine_residual(so3_kinematics(w),
                                                  random_quaternion(rng).matrix(),
                                                  random_quaternion(rng).matrix()));
  }
  return {"group-affine SO(3)", worst < 1e-12, worst, 1e-12, '<'};
}

/// The attitude/bias pair on SE(3) driven by the raw gyro reading; the bias
/// enters the rotation rate, which breaks the group-affine property.
inline CheckResult check_se3_not_affine(int trials = 1000, std::uint64_t seed = 12) {
  std::mt19937_64 rng(seed);
  double least = std::numeric_limits<double>::infinity();
  for (int i = 0; i < trials; ++i) {
    const Vec3 w = gaussian3(rng);
    SE3Element a{random_quaternion(rng).matrix(), gaussian3(rng)};
    SE3Element b{random_quaternion(rng).matrix(), gaussian3(rng)};
    least = std::min(least,
                     group_affine_residual(se3_measured_rate_kinematics(w), a.matrix(), b.matrix()));
  }
  return {"SE(3) attitude-bias non-affine", least > 1e-3, least, 1e-3, '>'};
}

/// Largest difference between the updates of two filters from one state.
inline double update_deviation(const FilterState& s, const ObservationBatch& batch,
                               const ErrorModel& a, const ErrorModel& b) {
  const UpdateResult ra = update(s, batch, a);
  const UpdateResult rb = update(s, batch, b);
  if (ra.accepted != rb.accepted) return std::numeric_limits<double>::infinity();
  const double dq = (ra.state.q.coeffs() - rb.state.q.coeffs()).cwiseAbs().maxCoeff();
  const double db = (ra.state.bias - rb.state.bias).cwiseAbs().maxCoeff();
  const double dp = (ra.state.P - rb.state.P).cwiseAbs().maxCoeff() /
                    std::max(1.0, ra.state.P.cwiseAbs().maxCoeff());
  return std::max({dq, db, dp});
}

inline FilterState random_filter_state(std::mt19937_64& rng) {
  FilterState s;
  s.q = random_quaternion(rng);
  s.bias = 1e-4 * gaussian3(rng);
  const Eigen::Matrix<double, 6, 6> m =
      Eigen::Matrix<double, 6, 6>::NullaryExpr([&] { return std::normal_distribution<double>(0.0, 1.0)(rng); });
  Mat6 scale = Mat6::Identity();
  scale.bottomRightCorner<3, 3>() *= 1e-4;
  s.P = scale * (0.05 * m * m.transpose() + 1e-3 * Mat6::Identity()) * scale;
  return s;
}

inline ObservationBatch random_batch(const FilterState& s, std::mt19937_64& rng) {
  ObservationBatch batch;
  for (int i = 0; i < 2; ++i) {
    VectorObservation o;
    o.r = gaussian3(rng).normalized();
    o.R = random_spd3(rng, 1e-3);
    // Perturbed prediction so the innovation is nonzero.
    o.b = exp_quat(0.1 * gaussian3(rng)).matrix() * s.q.matrix() * o.r;
    batch.observations.push_back(o);
  }
  return batch;
}

/// Trajectory-dependent vs. transformed-innovation updates for the two
/// reference-frame error definitions.
inline std::vector<CheckResult> check_update_equivalence(int trials = 100, std::uint64_t seed = 13) {
  std::mt19937_64 rng(seed);
  double ref = 0.0, left = 0.0;
  for (int i = 0; i < trials; ++i) {
    const FilterState s = random_filter_state(rng);
    const ObservationBatch batch = random_batch(s, rng);
    ref = std::max(ref, update_deviation(s, batch, *model_from_name("MEKF-ref-traj"),
                                         *model_from_name("MEKF-ref")));
    left = std::max(left, update_deviation(s, batch, *model_from_name("QRIEKF-traj"),
                                           *model_from_name("QRIEKF")));
  }
  return {{"update equivalence (Ref)", ref < 1e-9, ref, 1e-9, '<'},
          {"update equivalence (LeftSE3)", left < 1e-9, left, 1e-9, '<'}};
}

/// Relative drift of kinetic energy and |J w| under torque-free RK4.
inline std::vector<CheckResult> check_conservation(int steps = 1000, double dt = 1.0) {
  SpacecraftConfig cfg;
  cfg.gravity_gradient = false;
  TruthState s;
  s.omega = Vec3(2.0, -1.0, 1.5) * kDeg;
  const Mat3& j = cfg.inertia;
  const double e0 = 0.5 * s.omega.dot(j * s.omega);
  const double h0 = (j * s.omega).norm();
  double de = 0.0, dh = 0.0;
  for (int k = 0; k < steps; ++k) {
    s = step_truth(s, cfg, k * dt, dt);
    de = std::max(de, std::abs(0.5 * s.omega.dot(j * s.omega) - e0) / e0);
    dh = std::max(dh, std::abs((j * s.omega).norm() - h0) / h0);
  }
  return {{"kinetic energy conservation", de < 1e-8, de, 1e-8, '<'},
          {"angular momentum conservation", dh < 1e-8, dh, 1e-8, '<'}};
}

inline std::vector<CheckResult> run_property_checks() {
  std::vector<CheckResult> out{check_group_affine_so3(), check_se3_not_affine()};
  for (auto& r : check_update_equivalence()) out.push_back(r);
  for (auto& r : check_conservation()) out.push_back(r);
  return out;
}

}  // namespace mekf
