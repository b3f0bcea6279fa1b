#pragma once

// Generic multiplicative EKF loop: covariance propagation, stacked vector
// observation update and the error-definition-specific retraction.

#include "mekf/attitude.hpp"
#include "mekf/error_models.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mekf {

enum class ErrorDefinition { Body, Ref, RightSE3, LeftSE3 };
enum class MeasurementMode { TrajectoryDependent, Invariant };

struct ErrorModel {
  ErrorDefinition definition = ErrorDefinition::Body;
  MeasurementMode mode = MeasurementMode::TrajectoryDependent;

  /// Attitude error expressed in the reference frame (left-multiplied estimate).
  bool reference_frame_attitude() const {
    return definition == ErrorDefinition::Ref || definition == ErrorDefinition::LeftSE3;
  }
  bool operator==(const ErrorModel&) const = default;
};

struct NamedErrorModel {
  std::string_view name;
  ErrorModel model;
};

/// The filters compared in the benchmarks, plus the two trajectory-dependent
/// reference-error variants that exist for the equivalence checks.
inline constexpr std::array<NamedErrorModel, 8> kNamedModels{{
    {"MEKF", {ErrorDefinition::Body, MeasurementMode::TrajectoryDependent}},
    {"IMEKF", {ErrorDefinition::Body, MeasurementMode::Invariant}},
    {"GEKF", {ErrorDefinition::RightSE3, MeasurementMode::TrajectoryDependent}},
    {"IGEKF", {ErrorDefinition::RightSE3, MeasurementMode::Invariant}},
    {"MEKF-ref", {ErrorDefinition::Ref, MeasurementMode::Invariant}},
    {"QRIEKF", {ErrorDefinition::LeftSE3, MeasurementMode::Invariant}},
    {"MEKF-ref-traj", {ErrorDefinition::Ref, MeasurementMode::TrajectoryDependent}},
    {"QRIEKF-traj", {ErrorDefinition::LeftSE3, MeasurementMode::TrajectoryDependent}},
}};

inline constexpr std::array<std::string_view, 6> kBenchmarkFilters{
    "MEKF", "IMEKF", "GEKF", "IGEKF", "MEKF-ref", "QRIEKF"};

inline std::optional<ErrorModel> model_from_name(std::string_view name) {
  for (const auto& m : kNamedModels) {
    if (m.name == name) return m.model;
  }
  return std::nullopt;
}

inline std::string model_name(const ErrorModel& model) {
  for (const auto& m : kNamedModels) {
    if (m.model == model) return std::string(m.name);
  }
  return "unknown";
}

struct VectorObservation {
  Vec3 b = Vec3::Zero();  // measured, body frame
  Vec3 r = Vec3::Zero();  // known, reference frame
  Mat3 R = Mat3::Zero();  // covariance of the body-frame noise
};

struct ObservationBatch {
  double epoch = 0.0;
  std::vector<VectorObservation> observations;
};

struct FilterState {
  UnitQuaternion q;
  Vec3 bias = Vec3::Zero();
  Mat6 P = Mat6::Identity();

  bool finite() const { return q.coeffs().allFinite() && bias.allFinite() && P.allFinite(); }
};

/// F and G for `definition`, evaluated at the current estimate.
inline StateSpaceMatrices process_model(ErrorDefinition definition, const UnitQuaternion& q_hat,
                                        const Vec3& omega_hat, const Vec3& beta_hat) {
  switch (definition) {
    case ErrorDefinition::Body:
      return build_body(omega_hat);
    case ErrorDefinition::Ref:
      return build_ref(q_hat.matrix());
    case ErrorDefinition::RightSE3:
      return build_right_se3(omega_hat, beta_hat);
    case ErrorDefinition::LeftSE3:
      return build_left_se3(q_hat.matrix(), omega_hat);
  }
  throw std::logic_error("process_model: unknown error definition");
}

/// Transition matrix exp(F dt) to second order.
inline Mat6 transition_matrix(const Mat6& F, double dt) {
  const Mat6 fdt = F * dt;
  return Mat6::Identity() + fdt + 0.5 * fdt * fdt;
}

inline void symmetrize(Mat6& p) { p = 0.5 * (p + p.transpose()).eval(); }

inline FilterState propagate(const FilterState& state, const Vec3& gyro_meas, double dt,
                             const ErrorModel& model, const NoiseConfig& noise) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("propagate: dt must be positive");
  }
  if (!gyro_meas.allFinite()) {
    throw std::invalid_argument("propagate: non-finite gyro measurement");
  }
  const Vec3 omega_hat = gyro_meas - state.bias;
  const StateSpaceMatrices ss = process_model(model.definition, state.q, omega_hat, state.bias);
  const Mat6 phi = transition_matrix(ss.F, dt);

  FilterState next;
  // Exact for a constant rate over the step.
  next.q = exp_quat(omega_hat * dt) * state.q;
  next.bias = state.bias;
  next.P = phi * state.P * phi.transpose() + ss.G * noise.Q() * ss.G.transpose() * dt;
  symmetrize(next.P);
  return next;
}

/// Error of `truth` about `estimate` under `definition`, mapped to the 6-vector
/// with the exact (not first-order) group logarithm on the attitude part.
inline Vec6 error_between(const UnitQuaternion& q_true, const Vec3& beta_true,
                          const UnitQuaternion& q_hat, const Vec3& beta_hat,
                          ErrorDefinition definition) {
  Vec6 e;
  switch (definition) {
    case ErrorDefinition::Body:
      e << log_quat(q_true * q_hat.conjugate()), beta_true - beta_hat;
      break;
    case ErrorDefinition::Ref:
      e << log_quat(q_hat.conjugate() * q_true), beta_true - beta_hat;
      break;
    case ErrorDefinition::RightSE3: {
      const UnitQuaternion dq = q_true * q_hat.conjugate();
      e << log_quat(dq), beta_true - dq.matrix() * beta_hat;
      break;
    }
    case ErrorDefinition::LeftSE3:
      e << log_quat(q_hat.conjugate() * q_true), q_hat.matrix().transpose() * (beta_true - beta_hat);
      break;
  }
  return e;
}

/// x_hat (+) delta. The covariance is carried over unchanged.
inline FilterState retract(const FilterState& state, const Vec6& delta,
                           ErrorDefinition definition) {
  const Vec3 da = delta.head<3>();
  const Vec3 db = delta.tail<3>();
  FilterState next = state;
  switch (definition) {
    case ErrorDefinition::Body:
      next.q = exp_quat(da) * state.q;
      next.bias = state.bias + db;
      break;
    case ErrorDefinition::Ref:
      next.q = state.q * exp_quat(da);
      next.bias = state.bias + db;
      break;
    case ErrorDefinition::RightSE3:
      next.q = exp_quat(da) * state.q;
      next.bias = state.bias + db + skew(state.bias) * da;
      break;
    case ErrorDefinition::LeftSE3:
      next.q = state.q * exp_quat(da);
      next.bias = state.bias + state.q.matrix() * db;
      break;
  }
  return next;
}

inline FilterState retract(const FilterState& state, const Vec6& delta, const ErrorModel& model) {
  return retract(state, delta, model.definition);
}

/// Stacked measurement model of a batch: one 3-row block per observation.
struct LinearizedBatch {
  Eigen::MatrixXd H;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd R;
};

inline LinearizedBatch linearize(const FilterState& state, const ObservationBatch& batch,
                                 const ErrorModel& model) {
  const auto n = static_cast<Eigen::Index>(batch.observations.size());
  LinearizedBatch lin;
  lin.H = Eigen::MatrixXd::Zero(3 * n, 6);
  lin.innovation = Eigen::VectorXd::Zero(3 * n);
  lin.R = Eigen::MatrixXd::Zero(3 * n, 3 * n);

  const RotationMatrix a_pred = state.q.matrix();
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorObservation& obs = batch.observations[static_cast<std::size_t>(i)];
    if (obs.r.squaredNorm() == 0.0) {
      throw std::invalid_argument("linearize: zero reference vector");
    }
    Mat36 h;
    Vec3 innov = obs.b - a_pred * obs.r;
    Mat3 r = obs.R;
    if (!model.reference_frame_attitude()) {
      h = model.mode == MeasurementMode::Invariant ? build_h_body_invariant(obs.b)
                                                   : build_h_body_traj(a_pred, obs.r);
    } else if (model.mode == MeasurementMode::TrajectoryDependent) {
      h = build_h_ref_traj(a_pred, obs.r);
    } else {
      const TransformedMeasurement t = build_h_ref_invariant(a_pred, obs.b, obs.r, obs.R);
      h = t.H;
      innov = t.innovation;
      r = t.R;
    }
    lin.H.middleRows<3>(3 * i) = h;
    lin.innovation.segment<3>(3 * i) = innov;
    lin.R.block<3, 3>(3 * i, 3 * i) = r;
  }
  return lin;
}

struct UpdateResult {
  FilterState state;
  Vec6 delta = Vec6::Zero();
  /// False when the innovation covariance was singular; `state` is then the input.
  bool accepted = true;
  double condition_number = 1.0;
};

inline constexpr double kMaxInnovationCondition = 1e12;

/// Kalman update with the gain and (I - K H) P covariance form.
inline UpdateResult update(const FilterState& state, const ObservationBatch& batch,
                           const ErrorModel& model) {
  UpdateResult out{state};
  if (batch.observations.empty()) return out;

  const LinearizedBatch lin = linearize(state, batch, model);
  const Eigen::MatrixXd ph = state.P * lin.H.transpose();
  Eigen::MatrixXd s = lin.H * ph + lin.R;
  s = 0.5 * (s + s.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  out.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || !(out.condition_number < kMaxInnovationCondition)) {
    out.accepted = false;
    return out;
  }

  // K = P H^T S^-1, via S K^T = H P.
  const Eigen::MatrixXd k = s.ldlt().solve(ph.transpose()).transpose();
  out.delta = k * lin.innovation;
  FilterState next = retract(state, out.delta, model);
  next.P = (Mat6::Identity() - k * lin.H) * state.P;
  symmetrize(next.P);
  out.state = next;
  return out;
}

/// Owns one filter instance's state. Not thread-safe; distinct instances share nothing.
class AttitudeFilter {
 public:
  AttitudeFilter(ErrorModel model, NoiseConfig noise, FilterState initial)
      : model_(model), noise_(noise), state_(std::move(initial)) {}

  // Once diverged (non-finite state) the instance stops evolving.
  void propagate(const Vec3& gyro_meas, double dt) {
    if (diverged_) return;
    if (!state_.bias.allFinite() || !state_.P.allFinite()) {
      diverged_ = true;
      return;
    }
    state_ = mekf::propagate(state_, gyro_meas, dt, model_, noise_);
    if (!state_.finite()) diverged_ = true;
  }

  /// Returns false when the batch was rejected or the filter has diverged.
  bool update(const ObservationBatch& batch) {
    if (diverged_) return false;
    UpdateResult r = mekf::update(state_, batch, model_);
    if (!r.accepted) {
      ++rejected_;
      if (!state_.P.allFinite()) diverged_ = true;
      return false;
    }
    if (!r.state.finite() || !r.delta.allFinite()) {
      diverged_ = true;
      return false;
    }
    state_ = std::move(r.state);
    return true;
  }

  const FilterState& state() const { return state_; }
  const ErrorModel& model() const { return model_; }
  bool diverged() const { return diverged_; }
  int rejected_batches() const { return rejected_; }

 private:
  ErrorModel model_;
  NoiseConfig noise_;
  FilterState state_;
  bool diverged_ = false;
  int rejected_ = 0;
};

}  // namespace mekf
