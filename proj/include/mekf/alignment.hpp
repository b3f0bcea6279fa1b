#pragma once

// Integrated-velocity vector observations for strapdown initial alignment,
// a synthetic swaying-vehicle generator, and the attitude-only filters that
// consume them.
//
// Frames: n is local-level NED, i is n frozen at the alignment start t0, b is
// the body. Over the window [t_m, t]
//   alpha(t) = int C_{b(tau)}^{b(t)} f^b(tau) dtau
//   beta(t)  = -int C_{n(tau)}^{i} g^n dtau
// and alpha = A(t) beta with A(t) = C_i^{b(t)}, a reference-to-body matrix in
// the same convention as UnitQuaternion::matrix().

#include "mekf/attitude.hpp"
#include "mekf/spacecraft_sim.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mekf {

inline constexpr double kStandardGravity = 9.80665;

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body
  Vec3 accel = Vec3::Zero();  // specific force, m/s^2, body
};

struct AlignmentObservation {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  double epoch = 0.0;
};

struct AlignmentSite {
  double latitude = 0.0;  // rad
  double gravity = kStandardGravity;
  double t0 = 0.0;  // alignment start, fixes the inertial frame

  /// Earth rate in NED.
  Vec3 earth_rate_n() const {
    return kEarthRate * Vec3(std::cos(latitude), 0.0, -std::sin(latitude));
  }
  Vec3 gravity_n() const { return {0.0, 0.0, gravity}; }
  /// C_{n(t)}^{i}
  Mat3 nav_to_inertial(double t) const { return rotation_exp(earth_rate_n() * (t - t0)); }
};

/// Body rotation increment between two gyro samples, second-order coning
/// correction for a linearly varying rate.
inline Vec3 rotation_increment(const Vec3& w0, const Vec3& w1, double dt) {
  return 0.5 * (w0 + w1) * dt + (dt * dt / 12.0) * w0.cross(w1);
}

/// Builds (alpha, beta) over the given window. The nominal period is the
/// first interval; any gap above twice that is rejected.
inline AlignmentObservation build_alignment_pair(const std::vector<ImuSample>& window,
                                                 const AlignmentSite& site) {
  if (window.size() < 2) {
    throw std::invalid_argument("build_alignment_pair: need at least two samples");
  }
  const double nominal = window[1].t - window[0].t;
  if (!(nominal > 0.0)) {
    throw std::invalid_argument("build_alignment_pair: timestamps must increase");
  }

  // c = C_{b(tau_k)}^{b(t_m)}; s accumulates the integrand in b(t_m).
  Mat3 c = Mat3::Identity();
  Vec3 s = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  const Vec3 gn = site.gravity_n();
  Vec3 prev_body = window[0].accel;
  Vec3 prev_ref = site.nav_to_inertial(window[0].t) * gn;
  for (std::size_t k = 1; k < window.size(); ++k) {
    const double dt = window[k].t - window[k - 1].t;
    if (!(dt > 0.0)) {
      throw std::invalid_argument("build_alignment_pair: timestamps must increase");
    }
    if (dt > 2.0 * nominal) {
      throw std::invalid_argument("build_alignment_pair: gap of " + std::to_string(dt) +
                                  " s at t=" + std::to_string(window[k].t));
    }
    c = c * rotation_exp(rotation_increment(window[k - 1].gyro, window[k].gyro, dt));
    const Vec3 body = c * window[k].accel;
    s += 0.5 * dt * (prev_body + body);
    prev_body = body;

    const Vec3 ref = site.nav_to_inertial(window[k].t) * gn;
    beta -= 0.5 * dt * (prev_ref + ref);
    prev_ref = ref;
  }
  return {c.transpose() * s, beta, window.back().t};
}

/// Closed form of beta for a window [ta, tb]: -int_ta^tb exp([w x](tau - t0)) dtau g^n.
inline Vec3 static_beta(const AlignmentSite& site, double ta, double tb) {
  const Vec3 w = site.earth_rate_n();
  const double n = w.norm();
  const Mat3 k = skew(w);
  auto integral = [&](double t) {
    const double u = t - site.t0;
    return Mat3(u * Mat3::Identity() + ((1.0 - std::cos(n * u)) / (n * n)) * k +
                ((u - std::sin(n * u) / n) / (n * n)) * k * k);
  };
  return -(integral(tb) - integral(ta)) * site.gravity_n();
}

// ---------------------------------------------------------------------------
// Synthetic swaying vehicle
// ---------------------------------------------------------------------------

struct SwayConfig {
  Vec3 base = Vec3::Zero();                          // yaw, pitch, roll (rad)
  Vec3 amplitude = Vec3(1.0, 0.5, 0.5) * kDeg;       // rad
  Vec3 period = Vec3(7.0, 5.0, 3.0);                 // s
  double duration = 1000.0;                          // s
  double imu_rate = 100.0;                           // Hz
  double gyro_noise = 0.0;   // rad/s per sample, white
  double accel_noise = 0.0;  // m/s^2 per sample, white

  void validate() const {
    if ((period.array() <= 0.0).any()) {
      throw std::invalid_argument("SwayConfig: periods must be positive");
    }
    if (!(imu_rate > 0.0) || !(duration > 0.0)) {
      throw std::invalid_argument("SwayConfig: rate and duration must be positive");
    }
  }
};

/// The sweep scenario: a parked vehicle at 30 deg latitude rocking by about
/// a degree, sampled by a navigation-grade IMU at 100 Hz.
inline SwayConfig default_sway_config() {
  SwayConfig c;
  c.base = Vec3(40.0, 1.0, -2.0) * kDeg;
  c.gyro_noise = 3e-6;
  c.accel_noise = 5e-4;
  return c;
}

inline constexpr double kDefaultAlignmentLatitude = 30.0 * kDeg;

struct SwayTruth {
  std::vector<double> t;
  std::vector<RotationMatrix> c_nb;  // C_n^b
  std::vector<ImuSample> imu;

  /// C_i^b at sample k.
  RotationMatrix attitude(std::size_t k, const AlignmentSite& site) const {
    return c_nb[k] * site.nav_to_inertial(t[k]).transpose();
  }
};

inline SwayTruth gen_swaying_truth(const SwayConfig& cfg, const AlignmentSite& site,
                                   std::mt19937_64& rng) {
  cfg.validate();
  const Vec3 freq = (2.0 * kPi) * cfg.period.cwiseInverse();
  const Vec3 wie = site.earth_rate_n();
  const Vec3 fn(0.0, 0.0, -site.gravity);
  std::normal_distribution<double> n01(0.0, 1.0);

  const auto count = static_cast<std::size_t>(std::llround(cfg.duration * cfg.imu_rate)) + 1;
  SwayTruth out;
  out.t.reserve(count);
  out.c_nb.reserve(count);
  out.imu.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = site.t0 + static_cast<double>(k) / cfg.imu_rate;
    const double u = t - site.t0;
    Vec3 e, ed;
    for (int j = 0; j < 3; ++j) {
      e(j) = cfg.base(j) + cfg.amplitude(j) * std::sin(freq(j) * u);
      ed(j) = cfg.amplitude(j) * freq(j) * std::cos(freq(j) * u);
    }
    const double psi_d = ed(0), th_d = ed(1), ph_d = ed(2);
    const double th = e(1), ph = e(2);
    const Vec3 w_nb(ph_d - psi_d * std::sin(th),
                    th_d * std::cos(ph) + psi_d * std::cos(th) * std::sin(ph),
                    -th_d * std::sin(ph) + psi_d * std::cos(th) * std::cos(ph));
    const RotationMatrix c = euler_to_matrix(e(0), e(1), e(2));

    ImuSample s;
    s.t = t;
    s.gyro = w_nb + c * wie;
    s.accel = c * fn;
    if (cfg.gyro_noise > 0.0) {
      for (int j = 0; j < 3; ++j) s.gyro(j) += cfg.gyro_noise * n01(rng);
    }
    if (cfg.accel_noise > 0.0) {
      for (int j = 0; j < 3; ++j) s.accel(j) += cfg.accel_noise * n01(rng);
    }
    out.t.push_back(t);
    out.c_nb.push_back(c);
    out.imu.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attitude-only filter
// ---------------------------------------------------------------------------

struct AlignmentFilterConfig {
  bool invariant = true;       // H = [alpha x] (IMEKF) or [(A beta) x] (MEKF)
  double window = 10.0;        // s
  double p0_sd = 10.0 * kDeg;  // per axis
  double gyro_psd = 1e-6;      // rad/s^1/2
  /// alpha/beta are used unnormalized; the measurement covariance is
  /// (relative_sigma * |beta|)^2 I.
  double relative_sigma = 1e-4;
};

inline AlignmentFilterConfig alignment_filter_config(bool invariant = true) {
  AlignmentFilterConfig c;
  c.invariant = invariant;
  return c;
}

class AlignmentFilter {
 public:
  AlignmentFilter(const AlignmentFilterConfig& cfg, const UnitQuaternion& q0)
      : cfg_(cfg), q_(q0), p_(Mat3::Identity() * cfg.p0_sd * cfg.p0_sd) {}

  /// Propagates across one gyro interval.
  void propagate(const Vec3& w0, const Vec3& w1, double dt) {
    const Vec3 phi = rotation_increment(w0, w1, dt);
    q_ = exp_quat(phi) * q_;
    const Mat3 f = rotation_exp(phi).transpose();  // exp(-[w x] dt)
    p_ = f * p_ * f.transpose() + Mat3::Identity() * cfg_.gyro_psd * cfg_.gyro_psd * dt;
    p_ = 0.5 * (p_ + p_.transpose()).eval();
  }

  Mat3 measurement_matrix(const AlignmentObservation& obs) const {
    return cfg_.invariant ? skew(obs.alpha) : skew(q_.matrix() * obs.beta);
  }

  Vec3 innovation(const AlignmentObservation& obs) const {
    return obs.alpha - q_.matrix() * obs.beta;
  }

  void update(const AlignmentObservation& obs) {
    const double sd = cfg_.relative_sigma * obs.beta.norm();
    const Mat3 h = measurement_matrix(obs);
    Mat3 s = h * p_ * h.transpose() + Mat3::Identity() * sd * sd;
    s = 0.5 * (s + s.transpose()).eval();
    const Mat3 k = s.ldlt().solve(h * p_).transpose();
    const Vec3 dx = k * innovation(obs);
    q_ = exp_quat(dx) * q_;
    p_ = (Mat3::Identity() - k * h) * p_;
    p_ = 0.5 * (p_ + p_.transpose()).eval();
  }

  const UnitQuaternion& q() const { return q_; }
  const Mat3& P() const { return p_; }

 private:
  AlignmentFilterConfig cfg_;
  UnitQuaternion q_;
  Mat3 p_;
};

struct AlignmentErrorSample {
  double t = 0.0;
  Vec3 error_deg = Vec3::Zero();  // yaw, pitch, roll
};

struct AlignmentRun {
  std::vector<AlignmentErrorSample> series;
  /// First epoch after which |yaw error| stays below 5 deg; NaN if never.
  double time_to_5deg = std::numeric_limits<double>::quiet_NaN();
  double final_yaw_error_deg = 0.0;
  /// Max |yaw error| over the last 10 % of the run.
  double steady_yaw_error_deg = 0.0;
};

inline Vec3 euler_difference_deg(const RotationMatrix& estimate, const RotationMatrix& truth) {
  const Vec3 d = matrix_to_euler(estimate).as_vector() - matrix_to_euler(truth).as_vector();
  return Vec3(wrap_angle(d(0)), wrap_angle(d(1)), wrap_angle(d(2))) / kDeg;
}

/// Runs one filter from the initial C_n^b estimate over a sample stream.
/// truth_c_nb may be empty (field data); errors are then left at zero and
/// only the estimate is meaningful.
inline AlignmentRun run_alignment(const std::vector<ImuSample>& imu, const AlignmentSite& site,
                                  const RotationMatrix& initial_c_nb,
                                  const AlignmentFilterConfig& cfg,
                                  const std::vector<RotationMatrix>& truth_c_nb,
                                  std::vector<RotationMatrix>* estimates = nullptr) {
  if (imu.size() < 2) throw std::invalid_argument("run_alignment: empty IMU stream");
  if (!(cfg.window > 0.0)) throw std::invalid_argument("run_alignment: window must be positive");

  // A(t0) = C_n^b(t0) C_i^{n(t0)}
  const RotationMatrix a0 = initial_c_nb * site.nav_to_inertial(imu.front().t).transpose();
  AlignmentFilter filter(cfg, matrix_to_quat(a0));
  AlignmentRun run;

  auto record = [&](std::size_t k) {
    const RotationMatrix c_est = filter.q().matrix() * site.nav_to_inertial(imu[k].t);
    AlignmentErrorSample e;
    e.t = imu[k].t;
    if (!truth_c_nb.empty()) e.error_deg = euler_difference_deg(c_est, truth_c_nb[k]);
    run.series.push_back(e);
    if (estimates) estimates->push_back(c_est);
  };

  record(0);
  std::size_t start = 0;
  const double eps = 1e-9 * cfg.window;
  for (std::size_t k = 1; k < imu.size(); ++k) {
    filter.propagate(imu[k - 1].gyro, imu[k].gyro, imu[k].t - imu[k - 1].t);
    if (imu[k].t - imu[start].t >= cfg.window - eps) {
      const std::vector<ImuSample> window(imu.begin() + static_cast<long>(start),
                                          imu.begin() + static_cast<long>(k) + 1);
      filter.update(build_alignment_pair(window, site));
      record(k);
      start = k;
    }
  }

  if (!truth_c_nb.empty()) {
    const double t_end = run.series.back().t;
    const double t_steady = t_end - 0.1 * (t_end - run.series.front().t);
    for (const auto& s : run.series) {
      if (s.t >= t_steady) {
        run.steady_yaw_error_deg = std::max(run.steady_yaw_error_deg, std::abs(s.error_deg(0)));
      }
    }
    for (auto it = run.series.rbegin(); it != run.series.rend(); ++it) {
      if (std::abs(it->error_deg(0)) >= 5.0) break;
      run.time_to_5deg = it->t - run.series.front().t;
    }
    run.final_yaw_error_deg = run.series.back().error_deg(0);
  }
  return run;
}

struct SweepEntry {
  Vec3 misalignment_deg = Vec3::Zero();  // yaw, pitch, roll
  AlignmentRun mekf;
  AlignmentRun imekf;
};

/// Default misalignment sweep: yaw 30..170 deg step 20, pitch and roll +10 deg.
inline std::vector<Vec3> default_misalignments() {
  std::vector<Vec3> m;
  for (int yaw = 30; yaw <= 170; yaw += 20) m.emplace_back(yaw, 10.0, 10.0);
  return m;
}

/// Initial estimate C_n^b for a true C_n^b and an Euler misalignment.
inline RotationMatrix misaligned(const RotationMatrix& truth, const Vec3& misalignment_deg) {
  const EulerAngles e = matrix_to_euler(truth);
  return euler_to_matrix(e.yaw + misalignment_deg(0) * kDeg, e.pitch + misalignment_deg(1) * kDeg,
                         e.roll + misalignment_deg(2) * kDeg);
}

inline std::vector<SweepEntry> run_sweep(const SwayTruth& truth, const AlignmentSite& site,
                                         const std::vector<Vec3>& misalignments,
                                         const AlignmentFilterConfig& base) {
  std::vector<SweepEntry> out;
  AlignmentFilterConfig mekf = base, imekf = base;
  mekf.invariant = false;
  imekf.invariant = true;
  for (const Vec3& m : misalignments) {
    const RotationMatrix c0 = misaligned(truth.c_nb.front(), m);
    out.push_back({m, run_alignment(truth.imu, site, c0, mekf, truth.c_nb),
                   run_alignment(truth.imu, site, c0, imekf, truth.c_nb)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// IMU log input
// ---------------------------------------------------------------------------

/// Rows "t, wx, wy, wz, fx, fy, fz" (s, rad/s, m/s^2), comma and/or
/// whitespace separated. Blank lines and lines starting with '#' are skipped;
/// a first non-numeric line is taken as a header.
inline std::vector<ImuSample> read_imu_log(std::istream& in) {
  std::vector<ImuSample> out;
  std::string line;
  int line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    for (char& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    }
    std::istringstream row(line);
    std::vector<double> v;
    std::string tok;
    bool numeric = true;
    while (row >> tok) {
      if (tok.front() == '#' && v.empty()) break;
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (v.empty() && numeric) continue;  // blank or comment
    if (!numeric) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw std::runtime_error("IMU log line " + std::to_string(line_no) +
                               ": non-numeric field");
    }
    if (v.size() != 7) {
      throw std::runtime_error("IMU log line " + std::to_string(line_no) + ": expected 7 fields, got " +
                               std::to_string(v.size()));
    }
    ImuSample s;
    s.t = v[0];
    s.gyro = Vec3(v[1], v[2], v[3]);
    s.accel = Vec3(v[4], v[5], v[6]);
    if (!std::isfinite(s.t) || !s.gyro.allFinite() || !s.accel.allFinite()) {
      throw std::runtime_error("IMU log line " + std::to_string(line_no) + ": non-finite value");
    }
    if (!out.empty() && !(s.t > out.back().t)) {
      throw std::runtime_error("IMU log line " + std::to_string(line_no) +
                               ": timestamps must strictly increase");
    }
    out.push_back(s);
    header_allowed = false;
  }
  if (out.empty()) throw std::runtime_error("IMU log: no samples");
  return out;
}

}  // namespace mekf
