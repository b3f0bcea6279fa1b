#pragma once

// Truth and sensor simulation for a tumbling rigid spacecraft on a circular
// orbit under gravity-gradient torque.

#include "mekf/attitude.hpp"
#include "mekf/error_models.hpp"
#include "mekf/filter.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mekf {

inline constexpr double kMuEarthKm3 = 398600.4418;  // km^3/s^2
inline constexpr double kEarthRadiusKm = 6378.137;
inline constexpr double kEarthRate = 7.292115e-5;  // rad/s
/// 2015-06-01 12:00 UTC
inline constexpr double kDefaultEpochJd = 2457175.0;

struct SpacecraftConfig {
  Mat3 inertia = Eigen::Vector3d(60.0, 53.0, 70.0).asDiagonal();  // kg m^2
  double altitude_km = 500.0;
  double inclination_deg = 60.0;
  double raan_deg = 120.0;
  double arg_perigee_deg = 0.0;
  double true_anomaly_deg = 0.0;
  double epoch_jd = kDefaultEpochJd;
  bool gravity_gradient = true;  // false: torque-free motion

  double semi_major_axis_km() const { return kEarthRadiusKm + altitude_km; }

  void validate() const {
    if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("SpacecraftConfig: inertia must be symmetric");
    }
    if (Eigen::SelfAdjointEigenSolver<Mat3>(inertia).eigenvalues().minCoeff() <= 0.0) {
      throw std::invalid_argument("SpacecraftConfig: inertia must be positive definite");
    }
    if (!(altitude_km > -kEarthRadiusKm)) {
      throw std::invalid_argument("SpacecraftConfig: invalid altitude");
    }
  }
};

inline double orbital_period(const SpacecraftConfig& cfg) {
  const double a = cfg.semi_major_axis_km();
  return 2.0 * kPi * std::sqrt(a * a * a / kMuEarthKm3);
}

/// Inertial position (km) on the circular two-body orbit.
inline Vec3 orbit_position(const SpacecraftConfig& cfg, double t) {
  const double a = cfg.semi_major_axis_km();
  const double n = std::sqrt(kMuEarthKm3 / (a * a * a));
  const double u = (cfg.arg_perigee_deg + cfg.true_anomaly_deg) * kDeg + n * t;
  const double raan = cfg.raan_deg * kDeg;
  const double inc = cfg.inclination_deg * kDeg;
  const double cu = std::cos(u), su = std::sin(u);
  const double co = std::cos(raan), so = std::sin(raan);
  const double ci = std::cos(inc), si = std::sin(inc);
  return a * Vec3(co * cu - so * su * ci, so * cu + co * su * ci, su * si);
}

/// 3 mu (r x J r) / |r|^5 with r the body-frame position in metres.
inline Vec3 gravity_gradient_torque(const Mat3& inertia, const Vec3& r_body_m) {
  constexpr double mu_si = kMuEarthKm3 * 1e9;
  const double rn = r_body_m.norm();
  return 3.0 * mu_si / std::pow(rn, 5) * r_body_m.cross(inertia * r_body_m);
}

struct TruthState {
  UnitQuaternion q;         // reference -> body
  Vec3 omega = Vec3::Zero();  // body rate, rad/s
  Vec3 bias = Vec3::Zero();   // gyro bias, rad/s
};

namespace detail {

// q_dot = 1/2 [omega; 0] (x) q on raw coefficients.
inline Vec4 quat_rate(const Vec4& q, const Vec3& w) {
  const Vec3 qv = q.head<3>();
  Vec4 d;
  d.head<3>() = 0.5 * (q.w() * w - w.cross(qv));
  d.w() = -0.5 * w.dot(qv);
  return d;
}

struct RigidBodyDerivative {
  Vec4 dq;
  Vec3 dw;
};

inline RigidBodyDerivative rigid_body_rate(const Vec4& q, const Vec3& w,
                                           const SpacecraftConfig& cfg, const Mat3& j_inv,
                                           double t) {
  Vec3 torque = Vec3::Zero();
  if (cfg.gravity_gradient) {
    const Vec3 r_body = UnitQuaternion(q).matrix() * orbit_position(cfg, t) * 1e3;
    torque = gravity_gradient_torque(cfg.inertia, r_body);
  }
  return {quat_rate(q, w), j_inv * (torque - w.cross(cfg.inertia * w))};
}

}  // namespace detail

/// One RK4 step of Euler's equations with gravity-gradient torque plus the
/// attitude kinematics. The bias is carried unchanged.
inline TruthState step_truth(const TruthState& s, const SpacecraftConfig& cfg, double t,
                             double dt) {
  if (!(dt > 0.0) || dt > 1.0) {
    throw std::invalid_argument("step_truth: dt must be in (0, 1] s");
  }
  const Mat3 j_inv = cfg.inertia.inverse();
  const Vec4 q0 = s.q.coeffs();
  const Vec3 w0 = s.omega;
  const auto k1 = detail::rigid_body_rate(q0, w0, cfg, j_inv, t);
  const auto k2 = detail::rigid_body_rate(q0 + 0.5 * dt * k1.dq, w0 + 0.5 * dt * k1.dw, cfg,
                                          j_inv, t + 0.5 * dt);
  const auto k3 = detail::rigid_body_rate(q0 + 0.5 * dt * k2.dq, w0 + 0.5 * dt * k2.dw, cfg,
                                          j_inv, t + 0.5 * dt);
  const auto k4 =
      detail::rigid_body_rate(q0 + dt * k3.dq, w0 + dt * k3.dw, cfg, j_inv, t + dt);
  TruthState out = s;
  out.q = UnitQuaternion(q0 + dt / 6.0 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq));
  out.omega = w0 + dt / 6.0 * (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw);
  return out;
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for Monte Carlo run `index` under `master_seed`.
inline std::mt19937_64 run_stream(std::uint64_t master_seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(master_seed) ^ splitmix64(index + 1)));
}

inline Vec3 gaussian3(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return {x, y, z};
}

/// Square-root factor L with L L^T = cov for a PSD covariance.
inline Mat3 covariance_factor(const Mat3& cov) {
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (cov + cov.transpose()));
  if (eig.eigenvalues().minCoeff() < -1e-15 * std::max(1.0, cov.norm())) {
    throw std::invalid_argument("covariance is not positive semidefinite");
  }
  const Vec3 sd = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * sd.asDiagonal();
}

// ---------------------------------------------------------------------------
// Gyro
// ---------------------------------------------------------------------------

/// omega_meas = rate + bias + n_v, n_v ~ N(0, sigma_v^2/dt I); afterwards the
/// bias takes one random-walk step of variance sigma_u^2 dt.
inline Vec3 sample_gyro(const Vec3& rate, Vec3& bias, const NoiseConfig& noise, double dt,
                        std::mt19937_64& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample_gyro: dt must be positive");
  Vec3 meas = rate + bias;
  if (noise.sigma_v > 0.0) meas += (noise.sigma_v / std::sqrt(dt)) * gaussian3(rng);
  if (noise.sigma_u > 0.0) bias += (noise.sigma_u * std::sqrt(dt)) * gaussian3(rng);
  return meas;
}

inline Vec3 gen_gyro(TruthState& state, const NoiseConfig& noise, double dt,
                     std::mt19937_64& rng) {
  return sample_gyro(state.omega, state.bias, noise, dt, rng);
}

// ---------------------------------------------------------------------------
// Reference vectors
// ---------------------------------------------------------------------------

/// Low-precision solar direction (ECI, mean equator) for a Julian date.
inline Vec3 sun_direction_eci(double jd) {
  const double n = jd - 2451545.0;
  const double mean_lon = (280.460 + 0.9856474 * n) * kDeg;
  const double anomaly = (357.528 + 0.9856003 * n) * kDeg;
  const double lambda =
      mean_lon + (1.915 * std::sin(anomaly) + 0.020 * std::sin(2.0 * anomaly)) * kDeg;
  const double eps = (23.439 - 4e-7 * n) * kDeg;
  return Vec3(std::cos(lambda), std::cos(eps) * std::sin(lambda),
              std::sin(eps) * std::sin(lambda))
      .normalized();
}

/// Greenwich mean sidereal angle, radians.
inline double gmst(double jd) {
  return wrap_angle((280.46061837 + 360.98564736629 * (jd - 2451545.0)) * kDeg);
}

/// Unit direction of a tilted dipole field at `r_eci`. The axis is given by
/// the north geomagnetic pole in Earth-fixed latitude/longitude.
inline Vec3 dipole_field_direction(const Vec3& r_eci, double jd, double pole_lat_deg,
                                   double pole_lon_deg) {
  const double lat = pole_lat_deg * kDeg;
  const double lon = pole_lon_deg * kDeg + gmst(jd);
  const Vec3 north_pole(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
                        std::sin(lat));
  const Vec3 m = -north_pole;  // dipole moment points to the south geomagnetic pole
  const Vec3 rhat = r_eci.normalized();
  return (3.0 * m.dot(rhat) * rhat - m).normalized();
}

struct ReferenceProvider {
  enum class Kind { Fixed, SunEphemeris, TiltedDipole };
  Kind kind = Kind::Fixed;
  Vec3 fixed = Vec3::UnitX();
  double epoch_jd = kDefaultEpochJd;
  double pole_lat_deg = 80.37;   // 2015 geomagnetic north pole
  double pole_lon_deg = -72.62;

  static ReferenceProvider constant(const Vec3& v) {
    ReferenceProvider p;
    p.kind = Kind::Fixed;
    p.fixed = v;
    return p;
  }
  static ReferenceProvider sun(double epoch_jd) {
    ReferenceProvider p;
    p.kind = Kind::SunEphemeris;
    p.epoch_jd = epoch_jd;
    return p;
  }
  static ReferenceProvider dipole(double epoch_jd) {
    ReferenceProvider p;
    p.kind = Kind::TiltedDipole;
    p.epoch_jd = epoch_jd;
    return p;
  }

  /// Unit reference vector at time t (s since epoch) and position r_eci (km).
  Vec3 operator()(double t, const Vec3& r_eci) const {
    const double jd = epoch_jd + t / 86400.0;
    Vec3 v;
    switch (kind) {
      case Kind::Fixed:
        v = fixed;
        break;
      case Kind::SunEphemeris:
        v = sun_direction_eci(jd);
        break;
      case Kind::TiltedDipole:
        v = dipole_field_direction(r_eci, jd, pole_lat_deg, pole_lon_deg);
        break;
    }
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::invalid_argument("ReferenceProvider: zero reference vector");
    }
    return v / n;
  }
};

/// b = A(q_true) r + v, v ~ N(0, cov).
inline VectorObservation gen_vector_obs(const TruthState& state, const Vec3& r, const Mat3& cov,
                                        std::mt19937_64& rng) {
  if (!(r.norm() > 0.0)) throw std::invalid_argument("gen_vector_obs: zero reference vector");
  VectorObservation obs;
  obs.r = r;
  obs.R = cov;
  obs.b = state.q.matrix() * r;
  if (cov.cwiseAbs().maxCoeff() > 0.0) obs.b += covariance_factor(cov) * gaussian3(rng);
  return obs;
}

// ---------------------------------------------------------------------------
// Sensor suite and measurement streams
// ---------------------------------------------------------------------------

struct VectorSensor {
  std::string name;
  double rate_hz = 1.0;
  Mat3 cov = Mat3::Zero();
  ReferenceProvider provider;
};

struct SensorSuite {
  double gyro_hz = 10.0;
  NoiseConfig gyro_noise;
  std::vector<VectorSensor> vector_sensors;
};

inline SensorSuite default_sensor_suite(double epoch_jd = kDefaultEpochJd) {
  SensorSuite s;
  s.vector_sensors.push_back(
      {"sun", 1.0, 0.0175 * 0.0175 * Mat3::Identity(), ReferenceProvider::sun(epoch_jd)});
  s.vector_sensors.push_back({"magnetometer", 1.0, 0.0873 * 0.0873 * Mat3::Identity(),
                              ReferenceProvider::dipole(epoch_jd)});
  return s;
}

/// One propagation interval of the filter: apply `gyro` for `dt` ending at
/// `t`, then process batch `batch` if it is non-negative.
struct StreamStep {
  double t = 0.0;
  double dt = 0.0;
  Vec3 gyro = Vec3::Zero();
  int batch = -1;
};

struct TruthSample {
  double t = 0.0;
  UnitQuaternion q;
  Vec3 bias = Vec3::Zero();
};

/// Everything a filter consumes in one run, plus the truth at each
/// observation epoch. Filters only ever see `steps` and `batches`.
struct MeasurementStream {
  std::vector<StreamStep> steps;
  std::vector<ObservationBatch> batches;
  std::vector<TruthSample> truth;  // parallel to batches
};

/// FNV-1a, used to show that several consumers saw the same data.
class StreamHasher {
 public:
  void add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void add(double v) { add(&v, sizeof v); }
  void add(const Vec3& v) {
    for (int i = 0; i < 3; ++i) add(v(i));
  }
  void add(const Mat3& m) {
    for (int i = 0; i < 9; ++i) add(m(i));
  }
  void add(const ObservationBatch& b) {
    add(b.epoch);
    for (const auto& o : b.observations) {
      add(o.b);
      add(o.r);
      add(o.R);
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t stream_hash(const MeasurementStream& s) {
  StreamHasher h;
  for (const auto& st : s.steps) {
    h.add(st.dt);
    h.add(st.gyro);
    if (st.batch >= 0) h.add(s.batches[static_cast<std::size_t>(st.batch)]);
  }
  return h.value();
}

struct SimulationTiming {
  double tick = 0.1;        // base clock, s
  int gyro_ticks = 1;       // gyro period in ticks
  std::vector<int> sensor_ticks;
  long total_ticks = 0;
};

inline SimulationTiming plan_timing(const SensorSuite& suite, double duration) {
  if (!(suite.gyro_hz > 0.0)) throw std::invalid_argument("gyro rate must be positive");
  if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
  SimulationTiming t;
  t.tick = 1.0 / suite.gyro_hz;
  for (const auto& s : suite.vector_sensors) {
    if (!(s.rate_hz > 0.0)) throw std::invalid_argument("sensor rate must be positive");
    t.tick = std::min(t.tick, 1.0 / s.rate_hz);
  }
  auto ticks_of = [&](double hz) {
    const double n = 1.0 / (hz * t.tick);
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-9 * n) {
      throw std::invalid_argument("sensor periods must be integer multiples of the fastest period");
    }
    return static_cast<int>(r);
  };
  t.gyro_ticks = ticks_of(suite.gyro_hz);
  for (const auto& s : suite.vector_sensors) t.sensor_ticks.push_back(ticks_of(s.rate_hz));
  t.total_ticks = std::lround(duration / t.tick);
  return t;
}

/// Truth trajectory at every base tick (integrated with RK4 steps of at most 0.1 s).
inline std::vector<TruthState> simulate_truth(const TruthState& initial,
                                              const SpacecraftConfig& cfg, double tick,
                                              long ticks) {
  const int sub = std::max(1, static_cast<int>(std::ceil(tick / 0.1 - 1e-9)));
  const double h = tick / sub;
  std::vector<TruthState> out;
  out.reserve(static_cast<std::size_t>(ticks + 1));
  out.push_back(initial);
  TruthState s = initial;
  for (long k = 0; k < ticks; ++k) {
    for (int j = 0; j < sub; ++j) s = step_truth(s, cfg, k * tick + j * h, h);
    out.push_back(s);
  }
  return out;
}

/// Simulates truth and every sensor once. The gyro reports the mean body
/// rate over its sampling interval (the delta-angle divided by the period),
/// so a bias-free noiseless gyro integrates exactly onto the truth.
inline MeasurementStream simulate_measurements(const TruthState& initial,
                                               const SpacecraftConfig& cfg,
                                               const SensorSuite& suite, double duration,
                                               std::mt19937_64& rng) {
  cfg.validate();
  const SimulationTiming timing = plan_timing(suite, duration);
  const std::vector<TruthState> truth =
      simulate_truth(initial, cfg, timing.tick, timing.total_ticks);
  const double gyro_period = timing.gyro_ticks * timing.tick;

  MeasurementStream stream;
  stream.steps.reserve(static_cast<std::size_t>(timing.total_ticks));
  Vec3 bias = initial.bias;
  Vec3 gyro = Vec3::Zero();
  Vec3 applied_bias = bias;
  for (long k = 0; k < timing.total_ticks; ++k) {
    if (k % timing.gyro_ticks == 0) {
      const long end = std::min(k + timing.gyro_ticks, timing.total_ticks);
      const auto& qa = truth[static_cast<std::size_t>(k)].q;
      const auto& qb = truth[static_cast<std::size_t>(end)].q;
      const double span = (end - k) * timing.tick;
      const Vec3 mean_rate = log_quat(qb * qa.conjugate()) / span;
      applied_bias = bias;
      gyro = sample_gyro(mean_rate, bias, suite.gyro_noise, gyro_period, rng);
    }
    StreamStep step;
    step.dt = timing.tick;
    step.t = (k + 1) * timing.tick;
    step.gyro = gyro;

    const long tick_index = k + 1;
    ObservationBatch batch;
    batch.epoch = step.t;
    TruthState now = truth[static_cast<std::size_t>(tick_index)];
    now.bias = applied_bias;
    const Vec3 r_eci = orbit_position(cfg, step.t);
    for (std::size_t i = 0; i < suite.vector_sensors.size(); ++i) {
      if (tick_index % timing.sensor_ticks[i] != 0) continue;
      const auto& sensor = suite.vector_sensors[i];
      batch.observations.push_back(
          gen_vector_obs(now, sensor.provider(step.t, r_eci), sensor.cov, rng));
    }
    if (!batch.observations.empty()) {
      step.batch = static_cast<int>(stream.batches.size());
      stream.batches.push_back(std::move(batch));
      stream.truth.push_back({step.t, now.q, now.bias});
    }
    stream.steps.push_back(step);
  }
  return stream;
}

}  // namespace mekf
