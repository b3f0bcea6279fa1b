#include "mekf/checks.hpp"
#include "mekf/monte_carlo.hpp"
#include "mekf/spacecraft_sim.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mekf;

TEST(Orbit, CircularRadiusAndPeriod) {
  const SpacecraftConfig cfg;
  const double a = cfg.semi_major_axis_km();
  for (double t = 0; t < 6000; t += 137.0) EXPECT_NEAR(orbit_position(cfg, t).norm(), a, 1e-9);
  EXPECT_NEAR(orbital_period(cfg), 5677.0, 1.0);
  const double p = orbital_period(cfg);
  EXPECT_LT((orbit_position(cfg, p) - orbit_position(cfg, 0)).norm(), 1e-6);
}

TEST(Orbit, StartsOnAscendingNode) {
  const SpacecraftConfig cfg;
  const Vec3 r = orbit_position(cfg, 0.0) / cfg.semi_major_axis_km();
  EXPECT_LT((r - Vec3(std::cos(120 * kDeg), std::sin(120 * kDeg), 0)).norm(), 1e-12);
  // Moving north at the ascending node.
  EXPECT_GT(orbit_position(cfg, 1.0).z(), 0.0);
}

TEST(Config, Validation) {
  SpacecraftConfig cfg;
  cfg.inertia(0, 1) = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.inertia(2, 2) = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(RigidBody, SphericalInertiaKeepsRate) {
  SpacecraftConfig cfg;
  cfg.inertia = 50.0 * Mat3::Identity();
  TruthState s;
  s.omega = Vec3(0.01, -0.02, 0.03);
  const double w0 = s.omega.norm();
  for (int k = 0; k < 1000; ++k) s = step_truth(s, cfg, k * 0.1, 0.1);
  EXPECT_NEAR(s.omega.norm(), w0, 1e-10);
}

TEST(RigidBody, TorqueFreeConservation) {
  for (const auto& r : check_conservation(1000, 1.0)) EXPECT_TRUE(r.passed) << r.line();
}

TEST(RigidBody, GravityGradientBound) {
  const SpacecraftConfig cfg;
  const double r_m = cfg.semi_major_axis_km() * 1e3;
  const double bound = 3.0 * kMuEarthKm3 * 1e9 / std::pow(r_m, 3) * (70.0 - 53.0) / 2.0;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 r = r_m * gaussian3(rng).normalized();
    EXPECT_LE(gravity_gradient_torque(cfg.inertia, r).norm(), bound * (1 + 1e-12));
  }
  const Vec3 worst = r_m * Vec3(0, 1, 1).normalized();
  EXPECT_NEAR(gravity_gradient_torque(cfg.inertia, worst).norm(), bound, 1e-12 * bound);
  EXPECT_EQ(gravity_gradient_torque(cfg.inertia, Vec3(r_m, 0, 0)).norm(), 0.0);
}

TEST(RigidBody, StepRejectsBadDt) {
  EXPECT_THROW(step_truth({}, {}, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(step_truth({}, {}, 0.0, 2.0), std::invalid_argument);
}

TEST(Gyro, ZeroNoiseIsExact) {
  std::mt19937_64 rng(2);
  Vec3 bias(1e-4, 0, -1e-4);
  const Vec3 m = sample_gyro(Vec3(0.1, 0.2, 0.3), bias, {}, 0.1, rng);
  EXPECT_EQ(m, Vec3(0.1, 0.2, 0.3) + Vec3(1e-4, 0, -1e-4));
  EXPECT_EQ(bias, Vec3(1e-4, 0, -1e-4));
}

TEST(Gyro, WhiteNoiseVariance) {
  std::mt19937_64 rng(3);
  const double sv = 1e-3, dt = 0.1;
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Vec3 bias = Vec3::Zero();
    acc += sample_gyro(Vec3::Zero(), bias, {sv, 0.0}, dt, rng).squaredNorm();
  }
  EXPECT_NEAR(acc / (3.0 * n) / (sv * sv / dt), 1.0, 0.03);
}

TEST(Gyro, BiasRandomWalkVariance) {
  std::mt19937_64 rng(4);
  const double su = 1e-5, dt = 0.1;
  const int steps = 100, trials = 5000;
  double acc = 0.0;
  for (int i = 0; i < trials; ++i) {
    Vec3 bias = Vec3::Zero();
    for (int k = 0; k < steps; ++k) sample_gyro(Vec3::Zero(), bias, {0.0, su}, dt, rng);
    acc += bias.squaredNorm();
  }
  EXPECT_NEAR(acc / (3.0 * trials) / (su * su * steps * dt), 1.0, 0.05);
  EXPECT_THROW(([&] { Vec3 b; sample_gyro(Vec3::Zero(), b, {}, 0.0, rng); })(), std::invalid_argument);
}

TEST(VectorObs, ZeroCovarianceIsExact) {
  std::mt19937_64 rng(5);
  TruthState s;
  s.q = exp_quat(Vec3(0.3, 0.2, -0.1));
  const Vec3 r = Vec3(1, 2, 3).normalized();
  const VectorObservation o = gen_vector_obs(s, r, Mat3::Zero(), rng);
  EXPECT_EQ(o.b, Vec3(s.q.matrix() * r));
  EXPECT_THROW(gen_vector_obs(s, Vec3::Zero(), Mat3::Zero(), rng), std::invalid_argument);
}

TEST(VectorObs, NoiseCovariance) {
  std::mt19937_64 rng(6);
  Mat3 cov;
  cov << 4, 1, 0, 1, 2, 0.5, 0, 0.5, 1;
  cov *= 1e-4;
  Mat3 acc = Mat3::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vec3 e = gen_vector_obs({}, Vec3::UnitX(), cov, rng).b - Vec3::UnitX();
    acc += e * e.transpose();
  }
  EXPECT_LT((acc / n - cov).cwiseAbs().maxCoeff(), 0.03 * cov.maxCoeff());
}

TEST(References, UnitNorm) {
  const SpacecraftConfig cfg;
  const SensorSuite suite = default_sensor_suite();
  for (double t = 0; t < 6000; t += 97.0) {
    for (const auto& s : suite.vector_sensors) {
      EXPECT_NEAR(s.provider(t, orbit_position(cfg, t)).norm(), 1.0, 1e-12);
    }
  }
  EXPECT_EQ(ReferenceProvider::constant(Vec3(0, 0, 2))(0.0, Vec3::UnitX()), Vec3::UnitZ());
  EXPECT_THROW(ReferenceProvider::constant(Vec3::Zero())(0.0, Vec3::UnitX()), std::invalid_argument);
}

TEST(References, DipoleHorizontalAtMagneticEquator) {
  const ReferenceProvider p = ReferenceProvider::dipole(kDefaultEpochJd);
  const double lat = p.pole_lat_deg * kDeg, lon = p.pole_lon_deg * kDeg + gmst(kDefaultEpochJd);
  const Vec3 pole(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat));
  const Vec3 r = 7000.0 * pole.cross(Vec3::UnitX()).normalized();
  EXPECT_LT(std::abs(p(0.0, r).dot(r.normalized())), 1e-12);
  // Over the north magnetic pole the field points down.
  EXPECT_LT((p(0.0, 7000.0 * pole) + pole).norm(), 1e-12);
}

TEST(References, SunAndFieldStaySeparated) {
  const SpacecraftConfig cfg;
  const SensorSuite suite = default_sensor_suite();
  double least = kPi;
  for (double t = 0; t <= orbital_period(cfg); t += 10.0) {
    const Vec3 r = orbit_position(cfg, t);
    const Vec3 a = suite.vector_sensors[0].provider(t, r);
    const Vec3 b = suite.vector_sensors[1].provider(t, r);
    least = std::min(least, std::acos(std::clamp(a.dot(b), -1.0, 1.0)));
    least = std::min(least, kPi - std::acos(std::clamp(a.dot(b), -1.0, 1.0)));
  }
  EXPECT_GT(least, 10 * kDeg);
}

TEST(Timing, RatesAndErrors) {
  SensorSuite suite = default_sensor_suite();
  const SimulationTiming t = plan_timing(suite, 100.0);
  EXPECT_DOUBLE_EQ(t.tick, 0.1);
  EXPECT_EQ(t.gyro_ticks, 1);
  EXPECT_EQ(t.sensor_ticks, (std::vector<int>{10, 10}));
  EXPECT_EQ(t.total_ticks, 1000);
  EXPECT_THROW(plan_timing(suite, 0.0), std::invalid_argument);
  suite.vector_sensors[0].rate_hz = 0.3;
  EXPECT_THROW(plan_timing(suite, 100.0), std::invalid_argument);
  suite = default_sensor_suite();
  suite.gyro_hz = 0.0;
  EXPECT_THROW(plan_timing(suite, 100.0), std::invalid_argument);
}

TEST(Stream, DeterministicForSeed) {
  const SensorSuite suite = default_sensor_suite();
  TruthState s0;
  s0.omega = Vec3::Constant(0.1 * kDeg);
  std::mt19937_64 a(7), b(7), c(8);
  const auto sa = simulate_measurements(s0, {}, suite, 60.0, a);
  const auto sb = simulate_measurements(s0, {}, suite, 60.0, b);
  const auto sc = simulate_measurements(s0, {}, suite, 60.0, c);
  EXPECT_EQ(stream_hash(sa), stream_hash(sb));
  EXPECT_NE(stream_hash(sa), stream_hash(sc));
  EXPECT_EQ(sa.steps.size(), 600u);
  EXPECT_EQ(sa.batches.size(), 60u);
  EXPECT_EQ(sa.batches[0].observations.size(), 2u);
}

// With no bias and no noise the mean-rate gyro integrates onto the truth.
TEST(Stream, NoiselessGyroIntegratesOntoTruth) {
  SensorSuite suite = default_sensor_suite();
  for (auto& s : suite.vector_sensors) s.cov.setZero();
  TruthState s0;
  s0.q = exp_quat(Vec3(0.5, -0.2, 1.0));
  s0.omega = Vec3(0.3, -0.5, 0.2) * kDeg;
  std::mt19937_64 rng(9);
  const auto stream = simulate_measurements(s0, {}, suite, 600.0, rng);
  UnitQuaternion q = s0.q;
  double worst = 0.0;
  for (const auto& st : stream.steps) {
    q = exp_quat(st.gyro * st.dt) * q;
    if (st.batch >= 0) {
      worst = std::max(worst, rotation_angle_between(q, stream.truth[st.batch].q));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

// Every filter started at the truth stays there on noiseless data.
TEST(Stream, ZeroNoiseEndToEndEveryModel) {
  SensorSuite suite = default_sensor_suite();
  for (auto& s : suite.vector_sensors) s.cov.setZero();
  TruthState s0;
  s0.q = exp_quat(Vec3(0.1, 0.4, -0.7));
  s0.omega = Vec3::Constant(0.1 * kDeg);
  s0.bias = Vec3(100, 10, 10) * kDegPerHour;
  std::mt19937_64 rng(10);
  MeasurementStream stream = simulate_measurements(s0, {}, suite, 600.0, rng);
  // The filters still need a nonsingular R.
  for (auto& b : stream.batches) {
    for (auto& o : b.observations) o.R = 1e-6 * Mat3::Identity();
  }
  FilterState init;
  init.q = s0.q;
  init.bias = s0.bias;
  init.P = 1e-6 * Mat6::Identity();
  for (const auto& m : kNamedModels) {
    const FilterTrace tr = run_filter(stream, m.model, {1e-7, 1e-10}, init);
    ASSERT_FALSE(tr.diverged) << m.name;
    EXPECT_LT(*std::max_element(tr.angle_deg.begin(), tr.angle_deg.end()) * kDeg, 1e-6) << m.name;
  }
}
