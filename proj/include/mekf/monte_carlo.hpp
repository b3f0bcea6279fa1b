#pragma once

// Monte Carlo comparison of filter configurations on a shared measurement
// stream per run, reduced to per-epoch RMSE series.

#include "mekf/attitude.hpp"
#include "mekf/filter.hpp"
#include "mekf/spacecraft_sim.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace mekf {

struct InitialConditions {
  /// Truth attitude: fixed, or exp(alpha) (x) estimate with alpha ~ N(0, std^2 I).
  std::optional<UnitQuaternion> attitude_fixed;
  double attitude_std = 0.0;  // rad per axis
  /// Truth bias: fixed, or N(0, std^2 I).
  std::optional<Vec3> bias_fixed;
  double bias_std = 0.0;  // rad/s per axis
  Vec3 body_rate = Vec3::Constant(0.1 * kDeg);  // rad/s

  UnitQuaternion estimate;
  Vec3 estimate_bias = Vec3::Zero();
  double p0_attitude_sd = 0.0;  // rad
  double p0_bias_sd = 0.0;      // rad/s

  Mat6 P0() const {
    Mat6 p = Mat6::Zero();
    p.topLeftCorner<3, 3>().diagonal().setConstant(p0_attitude_sd * p0_attitude_sd);
    p.bottomRightCorner<3, 3>().diagonal().setConstant(p0_bias_sd * p0_bias_sd);
    return p;
  }
};

struct Scenario {
  std::string name = "custom";
  SpacecraftConfig spacecraft;
  SensorSuite sensors = default_sensor_suite();
  InitialConditions initial;
  std::vector<std::string> filters{kBenchmarkFilters.begin(), kBenchmarkFilters.end()};
  int runs = 100;
  std::uint64_t seed = 1;
  double duration = 3600.0;

  void validate() const {
    spacecraft.validate();
    if (runs < 1) throw std::invalid_argument("scenario: runs must be >= 1");
    if (!(duration > 0.0)) throw std::invalid_argument("scenario: duration must be positive");
    if (!(initial.p0_attitude_sd > 0.0) || !(initial.p0_bias_sd > 0.0)) {
      throw std::invalid_argument("scenario: initial covariance diagonal must be positive");
    }
    if (filters.empty()) throw std::invalid_argument("scenario: no filters configured");
    for (const auto& f : filters) {
      if (!model_from_name(f)) throw std::invalid_argument("scenario: unknown filter '" + f + "'");
    }
    if (sensors.vector_sensors.empty()) {
      throw std::invalid_argument("scenario: at least one vector sensor is required");
    }
    plan_timing(sensors, duration);  // rejects incommensurate rates
  }
};

/// Large initial errors: 150 deg attitude spread, P0 matched to it.
inline Scenario preset_scenario_a() {
  Scenario s;
  s.name = "paper-a";
  s.sensors.gyro_noise = {std::sqrt(10.0) * 1e-7, std::sqrt(10.0) * 1e-10};
  s.initial.attitude_std = 150.0 * kDeg;
  s.initial.bias_std = 20.0 * kDegPerHour;
  s.initial.p0_attitude_sd = 150.0 * kDeg;
  s.initial.p0_bias_sd = 20.0 * kDegPerHour;
  s.runs = 100;
  s.duration = 3600.0;
  return s;
}

/// 180 deg initial error with an overconfident 10 deg initial covariance.
inline Scenario preset_scenario_b() {
  Scenario s;
  s.name = "paper-b";
  s.sensors.gyro_noise = {std::sqrt(10.0) * 1e-5, std::sqrt(10.0) * 1e-8};
  s.initial.attitude_fixed = UnitQuaternion(Vec3(1.0, 0.0, 0.0), 0.0);
  s.initial.bias_fixed = Vec3(100.0, 10.0, 10.0) * kDegPerHour;
  s.initial.p0_attitude_sd = 10.0 * kDeg;
  s.initial.p0_bias_sd = 5.0 * kDegPerHour;
  s.runs = 100;
  s.duration = 4800.0;
  return s;
}

inline std::optional<Scenario> preset_by_name(std::string_view name) {
  if (name == "paper-a") return preset_scenario_a();
  if (name == "paper-b") return preset_scenario_b();
  return std::nullopt;
}

inline constexpr std::array<std::string_view, 2> kPresetNames{"paper-a", "paper-b"};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class RmseMetric {
  /// sqrt(mean(|e|)): the formula exactly as printed alongside the figures.
  AsPrinted,
  /// sqrt(mean(|e|^2))
  Conventional,
};

inline double rmse(std::span<const double> norms, RmseMetric metric = RmseMetric::AsPrinted) {
  if (norms.empty()) throw std::invalid_argument("rmse: empty input");
  double acc = 0.0;
  for (double n : norms) acc += metric == RmseMetric::AsPrinted ? n : n * n;
  return std::sqrt(acc / static_cast<double>(norms.size()));
}

/// Per-axis wrapped Euler-angle difference (estimate - truth), radians.
inline Vec3 euler_error(const UnitQuaternion& q_hat, const UnitQuaternion& q_true) {
  const Vec3 e = matrix_to_euler(q_hat.matrix()).as_vector() -
                 matrix_to_euler(q_true.matrix()).as_vector();
  return {wrap_angle(e.x()), wrap_angle(e.y()), wrap_angle(e.z())};
}

// ---------------------------------------------------------------------------
// Per-run evaluation
// ---------------------------------------------------------------------------

/// Error norms of one filter over one run, one entry per observation epoch.
struct FilterTrace {
  std::vector<double> attitude_deg;  // |euler error|
  std::vector<double> bias_deg_h;    // |beta_hat - beta|
  std::vector<double> angle_deg;     // geodesic attitude error
  bool diverged = false;
  std::uint64_t consumed_hash = 0;
};

inline FilterTrace run_filter(const MeasurementStream& stream, const ErrorModel& model,
                              const NoiseConfig& noise, const FilterState& initial) {
  FilterTrace tr;
  const std::size_t n = stream.batches.size();
  tr.attitude_deg.reserve(n);
  tr.bias_deg_h.reserve(n);
  tr.angle_deg.reserve(n);

  AttitudeFilter filter(model, noise, initial);
  StreamHasher hash;
  for (const StreamStep& step : stream.steps) {
    hash.add(step.dt);
    hash.add(step.gyro);
    filter.propagate(step.gyro, step.dt);
    if (step.batch < 0) continue;
    const auto bi = static_cast<std::size_t>(step.batch);
    hash.add(stream.batches[bi]);
    filter.update(stream.batches[bi]);
    if (filter.diverged()) {
      tr.diverged = true;
      continue;
    }
    const TruthSample& truth = stream.truth[bi];
    const FilterState& est = filter.state();
    tr.attitude_deg.push_back(euler_error(est.q, truth.q).norm() / kDeg);
    tr.bias_deg_h.push_back((est.bias - truth.bias).norm() / kDegPerHour);
    tr.angle_deg.push_back(rotation_angle_between(est.q, truth.q) / kDeg);
  }
  tr.consumed_hash = hash.value();
  return tr;
}

struct RunResult {
  std::vector<FilterTrace> traces;  // parallel to Scenario::filters
  std::uint64_t stream_hash = 0;
};

inline TruthState draw_initial_truth(const Scenario& s, std::mt19937_64& rng) {
  TruthState truth;
  truth.omega = s.initial.body_rate;
  if (s.initial.attitude_fixed) {
    truth.q = *s.initial.attitude_fixed;
  } else {
    truth.q = exp_quat(s.initial.attitude_std * gaussian3(rng)) * s.initial.estimate;
  }
  truth.bias = s.initial.bias_fixed ? *s.initial.bias_fixed : Vec3(s.initial.bias_std * gaussian3(rng));
  return truth;
}

inline RunResult run_single(const Scenario& s, int run_index) {
  std::mt19937_64 rng = run_stream(s.seed, static_cast<std::uint64_t>(run_index));
  const TruthState truth0 = draw_initial_truth(s, rng);
  const MeasurementStream stream =
      simulate_measurements(truth0, s.spacecraft, s.sensors, s.duration, rng);

  FilterState init;
  init.q = s.initial.estimate;
  init.bias = s.initial.estimate_bias;
  init.P = s.initial.P0();

  RunResult out;
  out.stream_hash = stream_hash(stream);
  for (const auto& name : s.filters) {
    out.traces.push_back(run_filter(stream, *model_from_name(name), s.sensors.gyro_noise, init));
    if (out.traces.back().consumed_hash != out.stream_hash) {
      throw std::logic_error("run_single: filter '" + name + "' consumed a different stream");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct FilterSeries {
  std::string name;
  std::vector<double> att_printed;       // sqrt(mean |da|), |da| in deg
  std::vector<double> att_conventional;  // deg
  std::vector<double> bias_printed;      // sqrt(mean |db|), |db| in deg/h
  std::vector<double> bias_conventional; // deg/h
  std::vector<double> angle_conventional;  // geodesic, deg
  int diverged = 0;

  const std::vector<double>& attitude(RmseMetric m) const {
    return m == RmseMetric::AsPrinted ? att_printed : att_conventional;
  }
  const std::vector<double>& bias(RmseMetric m) const {
    return m == RmseMetric::AsPrinted ? bias_printed : bias_conventional;
  }
};

struct RmseSeries {
  std::vector<double> t;  // observation epochs, s
  std::vector<FilterSeries> filters;
  std::uint64_t combined_stream_hash = 0;

  const FilterSeries& filter(std::string_view name) const {
    for (const auto& f : filters) {
      if (f.name == name) return f;
    }
    throw std::out_of_range("RmseSeries: no filter named " + std::string(name));
  }
};

struct RunOptions {
  unsigned threads = 0;  // 0: hardware concurrency
};

inline std::vector<RunResult> run_all(const Scenario& s, const RunOptions& opts = {}) {
  s.validate();
  std::vector<RunResult> results(static_cast<std::size_t>(s.runs));
  unsigned workers = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(s.runs));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int j = next++; j < s.runs; j = next++) {
      try {
        results[static_cast<std::size_t>(j)] = run_single(s, j);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = s.runs;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

/// Reduce per-run traces in run-index order, so the result does not depend on
/// scheduling. Diverged runs are excluded per filter and counted.
inline RmseSeries aggregate(const Scenario& s, const std::vector<RunResult>& results) {
  RmseSeries out;
  if (results.empty()) return out;

  // Epochs are identical across runs; rebuild them from the schedule.
  const SimulationTiming timing = plan_timing(s.sensors, s.duration);
  for (long k = 1; k <= timing.total_ticks; ++k) {
    for (int p : timing.sensor_ticks) {
      if (k % p == 0) {
        out.t.push_back(k * timing.tick);
        break;
      }
    }
  }
  const std::size_t epochs = out.t.size();

  StreamHasher combined;
  for (const auto& r : results) {
    combined.add(&r.stream_hash, sizeof r.stream_hash);
  }
  out.combined_stream_hash = combined.value();

  std::vector<double> att, bias, angle;
  for (std::size_t f = 0; f < s.filters.size(); ++f) {
    FilterSeries fs;
    fs.name = s.filters[f];
    std::vector<const FilterTrace*> ok;
    for (const auto& r : results) {
      const FilterTrace& tr = r.traces[f];
      if (tr.diverged || tr.attitude_deg.size() != epochs) {
        ++fs.diverged;
      } else {
        ok.push_back(&tr);
      }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t e = 0; e < epochs; ++e) {
      if (ok.empty()) {
        for (auto* v : {&fs.att_printed, &fs.att_conventional, &fs.bias_printed,
                        &fs.bias_conventional, &fs.angle_conventional}) {
          v->push_back(nan);
        }
        continue;
      }
      att.clear();
      bias.clear();
      angle.clear();
      for (const FilterTrace* tr : ok) {
        att.push_back(tr->attitude_deg[e]);
        bias.push_back(tr->bias_deg_h[e]);
        angle.push_back(tr->angle_deg[e]);
      }
      fs.att_printed.push_back(rmse(att, RmseMetric::AsPrinted));
      fs.att_conventional.push_back(rmse(att, RmseMetric::Conventional));
      fs.bias_printed.push_back(rmse(bias, RmseMetric::AsPrinted));
      fs.bias_conventional.push_back(rmse(bias, RmseMetric::Conventional));
      fs.angle_conventional.push_back(rmse(angle, RmseMetric::Conventional));
    }
    out.filters.push_back(std::move(fs));
  }
  return out;
}

inline RmseSeries run_scenario(const Scenario& s, const RunOptions& opts = {}) {
  return aggregate(s, run_all(s, opts));
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Header "t_s,filter,att_rmse_deg,bias_rmse_deg_h,diverged_count"; one row
/// per (epoch, filter). `provenance` lines are emitted first, prefixed by "# ".
inline void write_rmse_csv(std::ostream& os, const RmseSeries& series, RmseMetric metric,
                           const std::vector<std::string>& provenance = {}) {
  for (const auto& line : provenance) os << "# " << line << '\n';
  os << "t_s,filter,att_rmse_deg,bias_rmse_deg_h,diverged_count\n";
  for (std::size_t e = 0; e < series.t.size(); ++e) {
    for (const auto& f : series.filters) {
      os << format_number(series.t[e]) << ',' << f.name << ','
         << format_number(f.attitude(metric)[e]) << ',' << format_number(f.bias(metric)[e])
         << ',' << f.diverged << '\n';
    }
  }
}

/// Mean of a series over epochs with t >= t_from (steady-state level).
inline double mean_after(const RmseSeries& series, const std::vector<double>& values,
                         double t_from) {
  double acc = 0.0;
  int n = 0;
  for (std::size_t e = 0; e < series.t.size(); ++e) {
    if (series.t[e] >= t_from) {
      acc += values[e];
      ++n;
    }
  }
  return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace mekf
