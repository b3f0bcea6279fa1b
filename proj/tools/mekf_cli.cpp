#include "mekf/alignment.hpp"
#include "mekf/checks.hpp"
#include "mekf/config.hpp"
#include "mekf/monte_carlo.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef MEKF_VERSION
#define MEKF_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace mekf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioArgs {
  std::string preset;
  std::string config;
  std::string out = ".";
  int runs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string filters;
  double gyro_hz = 0.0;
  unsigned threads = 0;
  std::string metric = "printed";
};

std::string joined(const auto& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ", ") + std::string(i);
  return s;
}

Scenario load_scenario(const ScenarioArgs& a) {
  if (a.preset.empty() == a.config.empty()) {
    throw UsageError("give exactly one of --preset or --config");
  }
  Scenario s;
  if (!a.preset.empty()) {
    const auto p = preset_by_name(a.preset);
    if (!p) {
      throw UsageError("unknown preset '" + a.preset + "'; valid presets: " + joined(kPresetNames));
    }
    s = *p;
  } else {
    s = read_scenario_file(a.config);
  }
  if (a.runs > 0) s.runs = a.runs;
  if (a.seed_set) s.seed = a.seed;
  if (a.gyro_hz > 0.0) s.sensors.gyro_hz = a.gyro_hz;
  if (!a.filters.empty()) {
    s.filters.clear();
    std::stringstream list(a.filters);
    std::string f;
    while (std::getline(list, f, ',')) {
      if (!model_from_name(f)) {
        throw UsageError("unknown filter '" + f + "'; valid filters: " + joined(kBenchmarkFilters));
      }
      s.filters.push_back(f);
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return s;
}

std::vector<std::string> provenance(const Scenario& s, const std::string& command,
                                    const std::string& extra = {}) {
  std::vector<std::string> lines{"mekf " MEKF_VERSION, "command: " + command};
  if (!extra.empty()) lines.push_back(extra);
  lines.push_back("scenario follows; strip the leading '# ' to reuse it with --config");
  std::ostringstream ini;
  write_scenario(ini, s);
  std::istringstream in(ini.str());
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  const fs::path p = fs::path(dir) / name;
  std::ofstream os(p);
  if (!os) throw UsageError("cannot write " + p.string());
  return os;
}

void add_scenario_options(CLI::App* cmd, ScenarioArgs& a) {
  cmd->add_option("--preset", a.preset, "Compiled-in scenario: " + joined(kPresetNames));
  cmd->add_option("--config", a.config, "Scenario INI file")->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Master seed")->each([&a](const std::string&) { a.seed_set = true; });
  cmd->add_option("--filters", a.filters, "Comma list of " + joined(kBenchmarkFilters));
  cmd->add_option("--gyro-hz", a.gyro_hz, "Gyro sample rate override")->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------

int cmd_sim(const ScenarioArgs& a, const std::string& command) {
  const Scenario s = load_scenario(a);
  std::mt19937_64 rng = run_stream(s.seed, 0);
  const TruthState truth0 = draw_initial_truth(s, rng);
  const MeasurementStream stream =
      simulate_measurements(truth0, s.spacecraft, s.sensors, s.duration, rng);
  const auto prov = provenance(s, command, "run index 0");

  auto gyro = open_output(a.out, "gyro.csv");
  for (const auto& l : prov) gyro << "# " << l << '\n';
  gyro << "t_s,dt_s,wx_rad_s,wy_rad_s,wz_rad_s\n";
  for (const auto& st : stream.steps) {
    gyro << format_number(st.t) << ',' << format_number(st.dt) << ',' << format_number(st.gyro.x())
         << ',' << format_number(st.gyro.y()) << ',' << format_number(st.gyro.z()) << '\n';
  }

  auto obs = open_output(a.out, "observations.csv");
  for (const auto& l : prov) obs << "# " << l << '\n';
  obs << "t_s,bx,by,bz,rx,ry,rz,sigma\n";
  auto truth = open_output(a.out, "truth.csv");
  for (const auto& l : prov) truth << "# " << l << '\n';
  truth << "t_s,qx,qy,qz,qw,bias_x_deg_h,bias_y_deg_h,bias_z_deg_h\n";
  for (std::size_t i = 0; i < stream.batches.size(); ++i) {
    const auto& b = stream.batches[i];
    for (const auto& o : b.observations) {
      obs << format_number(b.epoch);
      for (int k = 0; k < 3; ++k) obs << ',' << format_number(o.b(k));
      for (int k = 0; k < 3; ++k) obs << ',' << format_number(o.r(k));
      obs << ',' << format_number(std::sqrt(o.R(0, 0))) << '\n';
    }
    const auto& t = stream.truth[i];
    truth << format_number(t.t);
    for (int k = 0; k < 4; ++k) truth << ',' << format_number(t.q.coeffs()(k));
    for (int k = 0; k < 3; ++k) truth << ',' << format_number(t.bias(k) / kDegPerHour);
    truth << '\n';
  }
  std::cout << "wrote " << stream.steps.size() << " gyro samples and " << stream.batches.size()
            << " observation epochs to " << a.out << "\n";
  return kExitOk;
}

int cmd_mc(const ScenarioArgs& a, const std::string& command) {
  if (a.metric != "printed" && a.metric != "conventional") {
    throw UsageError("--metric must be 'printed' or 'conventional'");
  }
  const RmseMetric metric = a.metric == "printed" ? RmseMetric::AsPrinted : RmseMetric::Conventional;
  const Scenario s = load_scenario(a);
  const RmseSeries series = run_scenario(s, {a.threads});

  const auto prov = provenance(s, command, "metric: " + a.metric + ", seed: " + std::to_string(s.seed));
  auto csv = open_output(a.out, "rmse.csv");
  write_rmse_csv(csv, series, metric, prov);

  nlohmann::ordered_json j;
  j["provenance"] = {{"version", MEKF_VERSION},
                     {"command", command},
                     {"seed", s.seed},
                     {"runs", s.runs},
                     {"metric", a.metric},
                     {"stream_hash", series.combined_stream_hash}};
  std::ostringstream ini;
  write_scenario(ini, s);
  j["provenance"]["scenario"] = ini.str();
  const double t_end = series.t.empty() ? 0.0 : series.t.back();
  j["final_epoch_s"] = t_end;
  bool all_diverged = true;
  for (const auto& f : series.filters) {
    const bool any = f.diverged < s.runs;
    all_diverged = all_diverged && !any;
    auto last = [](const std::vector<double>& v) { return v.empty() ? 0.0 : v.back(); };
    j["filters"][f.name] = {{"final_att_rmse_printed", last(f.att_printed)},
                            {"final_att_rmse_deg", last(f.att_conventional)},
                            {"final_angle_rmse_deg", last(f.angle_conventional)},
                            {"final_bias_rmse_deg_h", last(f.bias_conventional)},
                            {"diverged_runs", f.diverged}};
    std::cout << f.name << ": final attitude RMSE " << format_number(last(f.attitude(metric)))
              << " (" << a.metric << "), diverged " << f.diverged << "/" << s.runs << "\n";
  }
  auto summary = open_output(a.out, "summary.json");
  summary << j.dump(2) << '\n';
  if (all_diverged) {
    std::cerr << "error: every run diverged for every filter\n";
    return kExitNumerical;
  }
  return kExitOk;
}

struct AlignArgs {
  std::string imu;
  bool synthetic = false;
  bool static_vehicle = false;
  bool noiseless = false;
  std::string sweep = "30:170:20";
  double tilt = 10.0;
  double latitude = kDefaultAlignmentLatitude / kDeg;
  double window = 10.0;
  double duration = 1000.0;
  std::vector<double> initial{0.0, 0.0, 0.0};
  std::uint64_t seed = 1;
  std::string out = ".";
};

std::vector<Vec3> parse_sweep(const std::string& text, double tilt) {
  double a = 0, b = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0.0) || b < a ||
      !in.eof()) {
    throw UsageError("--sweep expects start:stop:step in degrees, e.g. 30:170:20");
  }
  std::vector<Vec3> out;
  for (double y = a; y <= b + 1e-9; y += step) out.emplace_back(y, tilt, tilt);
  return out;
}

int cmd_align(const AlignArgs& a, const std::string& command) {
  if (a.imu.empty() == !a.synthetic) throw UsageError("give exactly one of --imu or --synthetic");
  const std::vector<Vec3> sweep = parse_sweep(a.sweep, a.tilt);
  AlignmentSite site;
  site.latitude = a.latitude * kDeg;
  AlignmentFilterConfig cfg = alignment_filter_config();
  cfg.window = a.window;

  std::vector<ImuSample> imu;
  SwayTruth truth;
  RotationMatrix initial;
  if (a.synthetic) {
    SwayConfig sc = default_sway_config();
    sc.duration = a.duration;
    if (a.static_vehicle) sc.amplitude.setZero();
    if (a.noiseless) sc.gyro_noise = sc.accel_noise = 0.0;
    std::mt19937_64 rng(a.seed);
    truth = gen_swaying_truth(sc, site, rng);
    imu = truth.imu;
    initial = truth.c_nb.front();
  } else {
    std::ifstream in(a.imu);
    if (!in) throw UsageError("cannot open IMU log '" + a.imu + "'");
    try {
      imu = read_imu_log(in);
    } catch (const std::runtime_error& e) {
      throw UsageError(a.imu + ": " + e.what());
    }
    site.t0 = imu.front().t;
    initial = euler_to_matrix(a.initial[0] * kDeg, a.initial[1] * kDeg, a.initial[2] * kDeg);
  }

  auto csv = open_output(a.out, "align.csv");
  csv << "# mekf " MEKF_VERSION "\n# command: " << command << "\n";
  csv << "# latitude_deg = " << a.latitude << ", window_s = " << a.window
      << ", relative_sigma = " << cfg.relative_sigma << ", p0_deg = " << cfg.p0_sd / kDeg << "\n";
  const bool have_truth = a.synthetic;
  csv << (have_truth ? "misalignment_yaw_deg,filter,t_s,yaw_err_deg,pitch_err_deg,roll_err_deg\n"
                     : "misalignment_yaw_deg,filter,t_s,yaw_deg,pitch_deg,roll_deg\n");

  for (const Vec3& m : sweep) {
    const RotationMatrix c0 = misaligned(initial, m);
    for (bool invariant : {false, true}) {
      AlignmentFilterConfig c = cfg;
      c.invariant = invariant;
      const char* name = invariant ? "IMEKF" : "MEKF";
      std::vector<RotationMatrix> est;
      AlignmentRun run;
      try {
        run = run_alignment(imu, site, c0, c, truth.c_nb, &est);
      } catch (const std::invalid_argument& e) {
        // Gaps and non-monotonic stamps in a user log are input errors.
        if (a.synthetic) throw;
        throw UsageError(a.imu + ": " + e.what());
      }
      for (std::size_t i = 0; i < run.series.size(); ++i) {
        const Vec3 v = have_truth ? run.series[i].error_deg
                                  : Vec3(matrix_to_euler(est[i]).as_vector() / kDeg);
        csv << format_number(m(0)) << ',' << name << ',' << format_number(run.series[i].t - site.t0)
            << ',' << format_number(v(0)) << ',' << format_number(v(1)) << ',' << format_number(v(2))
            << '\n';
      }
      if (have_truth) {
        std::cout << "yaw " << m(0) << " deg " << name << ": final yaw error "
                  << format_number(run.final_yaw_error_deg) << " deg, time to 5 deg "
                  << (std::isnan(run.time_to_5deg) ? std::string("never")
                                                    : format_number(run.time_to_5deg) + " s")
                  << "\n";
      }
    }
  }
  return kExitOk;
}

int cmd_check() {
  bool ok = true;
  for (const auto& r : run_property_checks()) {
    std::cout << r.line() << "\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiplicative EKF attitude estimation: simulation, Monte Carlo benchmarks, "
               "INS alignment"};
  app.set_version_flag("--version", std::string(MEKF_VERSION));
  app.require_subcommand(1);

  ScenarioArgs sim_args;
  auto* sim = app.add_subcommand("sim", "Simulate one run; writes truth.csv, gyro.csv, observations.csv");
  add_scenario_options(sim, sim_args);

  ScenarioArgs mc_args;
  auto* mc = app.add_subcommand("mc", "Monte Carlo benchmark; writes rmse.csv and summary.json");
  add_scenario_options(mc, mc_args);
  mc->add_option("--runs", mc_args.runs, "Number of runs")->check(CLI::PositiveNumber);
  mc->add_option("--threads", mc_args.threads, "Worker threads (0: all cores)");
  mc->add_option("--metric", mc_args.metric, "RMSE written to rmse.csv: printed | conventional")
      ->capture_default_str();

  AlignArgs al;
  auto* align = app.add_subcommand(
      "align",
      "Attitude-estimation INS alignment over a yaw misalignment sweep; writes align.csv.\n"
      "IMU log rows: t, wx, wy, wz, fx, fy, fz (s, rad/s, m/s^2), comma or space separated,\n"
      "optional header line, '#' comments.");
  align->add_option("--imu", al.imu, "IMU log file");
  align->add_flag("--synthetic", al.synthetic, "Use the synthetic swaying vehicle");
  align->add_flag("--static", al.static_vehicle, "Synthetic vehicle without sway");
  align->add_flag("--noiseless", al.noiseless, "Synthetic IMU without noise");
  align->add_option("--sweep", al.sweep, "Yaw misalignments start:stop:step, deg")->capture_default_str();
  align->add_option("--tilt", al.tilt, "Pitch and roll misalignment, deg")->capture_default_str();
  align->add_option("--latitude", al.latitude, "Latitude, deg")->capture_default_str();
  align->add_option("--window", al.window, "Integration window, s")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  align->add_option("--duration", al.duration, "Synthetic run length, s")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  align->add_option("--initial", al.initial, "Initial yaw pitch roll for --imu, deg")->expected(3);
  align->add_option("--seed", al.seed, "Synthetic noise seed")->capture_default_str();
  align->add_option("--out", al.out, "Output directory")->capture_default_str();

  auto* check = app.add_subcommand("check", "Run the property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

  try {
    if (*sim) return cmd_sim(sim_args, command);
    if (*mc) return cmd_mc(mc_args, command);
    if (*align) return cmd_align(al, command);
    if (*check) return cmd_check();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
