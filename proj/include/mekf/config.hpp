#pragma once

// Scenario files: INI text, one section per module. Angles are degrees and
// rates deg/s or deg/h as the key suffix says; gyro noise densities keep the
// radian units they are usually quoted in. Conversion happens here only.
//
//   [scenario]     name, runs, seed, duration_s, filters
//   [spacecraft]   inertia, altitude_km, inclination_deg, raan_deg,
//                  arg_perigee_deg, true_anomaly_deg, epoch_jd,
//                  gravity_gradient (true | false)
//   [gyro]         rate_hz, sigma_v_rad, sigma_u_rad
//   [sun]          rate_hz, sigma_deg, source (ephemeris | fixed), vector
//   [magnetometer] rate_hz, sigma_deg, source (dipole | fixed), vector,
//                  pole_lat_deg, pole_lon_deg
//   [initial]      attitude (random | fixed), attitude_std_deg, attitude_quat,
//                  bias (random | fixed), bias_std_deg_h, bias_deg_h,
//                  body_rate_deg_s, estimate_quat, estimate_bias_deg_h,
//                  p0_attitude_deg, p0_bias_deg_h
//
// Vectors are whitespace-separated; quaternions are "x y z w".

#include "mekf/monte_carlo.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mekf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace config_detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k{
      {"scenario", {"name", "runs", "seed", "duration_s", "filters"}},
      {"spacecraft",
       {"inertia", "altitude_km", "inclination_deg", "raan_deg", "arg_perigee_deg",
        "true_anomaly_deg", "epoch_jd", "gravity_gradient"}},
      {"gyro", {"rate_hz", "sigma_v_rad", "sigma_u_rad"}},
      {"sun", {"rate_hz", "sigma_deg", "source", "vector"}},
      {"magnetometer",
       {"rate_hz", "sigma_deg", "source", "vector", "pole_lat_deg", "pole_lon_deg"}},
      {"initial",
       {"attitude", "attitude_std_deg", "attitude_quat", "bias", "bias_std_deg_h", "bias_deg_h",
        "body_rate_deg_s", "estimate_quat", "estimate_bias_deg_h", "p0_attitude_deg",
        "p0_bias_deg_h"}},
  };
  return k;
}

inline std::vector<double> numbers(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ConfigError(key + ": '" + tok + "' is not a number");
    v.push_back(x);
  }
  return v;
}

inline double scalar(const ptree& t, const std::string& key, double fallback) {
  const auto s = t.get_optional<std::string>(key);
  if (!s) return fallback;
  const auto v = numbers(key, *s);
  if (v.size() != 1) throw ConfigError(key + ": expected one number");
  return v[0];
}

inline std::uint64_t integer(const ptree& t, const std::string& key, std::uint64_t fallback) {
  const auto s = t.get_optional<std::string>(key);
  if (!s) return fallback;
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (s->find('-') != std::string::npos) throw std::invalid_argument("negative");
    v = std::stoull(*s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s->size()) {
    throw ConfigError(key + ": '" + *s + "' is not a non-negative integer");
  }
  return v;
}

inline Vec3 vec3(const ptree& t, const std::string& key, const Vec3& fallback) {
  const auto s = t.get_optional<std::string>(key);
  if (!s) return fallback;
  const auto v = numbers(key, *s);
  if (v.size() != 3) throw ConfigError(key + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

inline std::optional<UnitQuaternion> quat(const ptree& t, const std::string& key) {
  const auto s = t.get_optional<std::string>(key);
  if (!s) return std::nullopt;
  const auto v = numbers(key, *s);
  if (v.size() != 4) throw ConfigError(key + ": expected four numbers (x y z w)");
  try {
    return UnitQuaternion(Vec4(v[0], v[1], v[2], v[3]));
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": zero or non-finite quaternion");
  }
}

inline std::string text(const ptree& t, const std::string& key, const std::string& fallback) {
  return t.get<std::string>(key, fallback);
}

// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

inline std::string fmt(const UnitQuaternion& q) {
  return fmt(q.vec()) + " " + fmt(q.scalar());
}

inline double isotropic_sigma(const Mat3& cov, const std::string& sensor) {
  const double var = cov(0, 0);
  if ((cov - var * Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-15 * std::max(var, 1e-300)) {
    throw ConfigError(sensor + ": only isotropic noise can be written");
  }
  return std::sqrt(var);
}

}  // namespace config_detail

/// Parses a scenario. Missing keys keep the Scenario defaults; unknown
/// sections or keys are errors.
inline Scenario read_scenario(std::istream& in) {
  using namespace config_detail;
  ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config line ") + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : root) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must be inside a section");
    }
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
  }

  Scenario s;
  try {
    const ptree none;
    const ptree& sc = root.get_child("scenario", none);
    s.name = text(sc, "name", s.name);
    s.runs = static_cast<int>(integer(sc, "runs", static_cast<std::uint64_t>(s.runs)));
    s.seed = integer(sc, "seed", s.seed);
    s.duration = scalar(sc, "duration_s", s.duration);
    if (const auto f = sc.get_optional<std::string>("filters")) {
      s.filters.clear();
      std::string item;
      std::istringstream list(*f);
      while (std::getline(list, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) s.filters.push_back(item.substr(b, e - b + 1));
      }
    }

    const ptree& sp = root.get_child("spacecraft", none);
    if (const auto j = sp.get_optional<std::string>("inertia")) {
      const auto v = numbers("inertia", *j);
      if (v.size() != 3 && v.size() != 6) {
        throw ConfigError("inertia: expected Jxx Jyy Jzz [Jxy Jxz Jyz]");
      }
      Mat3 m = Vec3(v[0], v[1], v[2]).asDiagonal();
      if (v.size() == 6) {
        m(0, 1) = m(1, 0) = v[3];
        m(0, 2) = m(2, 0) = v[4];
        m(1, 2) = m(2, 1) = v[5];
      }
      s.spacecraft.inertia = m;
    }
    s.spacecraft.altitude_km = scalar(sp, "altitude_km", s.spacecraft.altitude_km);
    s.spacecraft.inclination_deg = scalar(sp, "inclination_deg", s.spacecraft.inclination_deg);
    s.spacecraft.raan_deg = scalar(sp, "raan_deg", s.spacecraft.raan_deg);
    s.spacecraft.arg_perigee_deg = scalar(sp, "arg_perigee_deg", s.spacecraft.arg_perigee_deg);
    s.spacecraft.true_anomaly_deg = scalar(sp, "true_anomaly_deg", s.spacecraft.true_anomaly_deg);
    s.spacecraft.epoch_jd = scalar(sp, "epoch_jd", s.spacecraft.epoch_jd);
    const std::string gg = text(sp, "gravity_gradient", "true");
    if (gg != "true" && gg != "false") throw ConfigError("gravity_gradient must be true or false");
    s.spacecraft.gravity_gradient = gg == "true";

    s.sensors = default_sensor_suite(s.spacecraft.epoch_jd);
    const ptree& gy = root.get_child("gyro", none);
    s.sensors.gyro_hz = scalar(gy, "rate_hz", s.sensors.gyro_hz);
    s.sensors.gyro_noise.sigma_v = scalar(gy, "sigma_v_rad", 0.0);
    s.sensors.gyro_noise.sigma_u = scalar(gy, "sigma_u_rad", 0.0);

    // Sensors absent from the file are dropped; an empty section keeps the default.
    std::vector<VectorSensor> sensors;
    for (VectorSensor v : s.sensors.vector_sensors) {
      const auto sec = root.get_child_optional(v.name);
      if (!sec) continue;
      v.rate_hz = scalar(*sec, "rate_hz", v.rate_hz);
      const double sd = scalar(*sec, "sigma_deg", std::sqrt(v.cov(0, 0)) / kDeg) * kDeg;
      v.cov = sd * sd * Mat3::Identity();
      const std::string natural = v.name == "sun" ? "ephemeris" : "dipole";
      const std::string source = text(*sec, "source", natural);
      if (source == "fixed") {
        const auto vec = sec->get_optional<std::string>("vector");
        if (!vec) throw ConfigError(v.name + ": source = fixed needs 'vector'");
        v.provider = ReferenceProvider::constant(vec3(*sec, "vector", Vec3::Zero()));
        if (!(v.provider.fixed.norm() > 0.0)) throw ConfigError(v.name + ": zero vector");
      } else if (source != natural) {
        throw ConfigError(v.name + ": source must be '" + natural + "' or 'fixed'");
      }
      if (v.name == "magnetometer") {
        v.provider.pole_lat_deg = scalar(*sec, "pole_lat_deg", v.provider.pole_lat_deg);
        v.provider.pole_lon_deg = scalar(*sec, "pole_lon_deg", v.provider.pole_lon_deg);
      }
      sensors.push_back(v);
    }
    s.sensors.vector_sensors = sensors;

    const ptree& in0 = root.get_child("initial", none);
    InitialConditions& ic = s.initial;
    const std::string att = text(in0, "attitude", "random");
    if (att == "fixed") {
      ic.attitude_fixed = quat(in0, "attitude_quat");
      if (!ic.attitude_fixed) throw ConfigError("initial: attitude = fixed needs attitude_quat");
    } else if (att != "random") {
      throw ConfigError("initial.attitude must be 'random' or 'fixed'");
    }
    ic.attitude_std = scalar(in0, "attitude_std_deg", 0.0) * kDeg;
    const std::string bias = text(in0, "bias", "random");
    if (bias == "fixed") {
      if (!in0.get_optional<std::string>("bias_deg_h")) {
        throw ConfigError("initial: bias = fixed needs bias_deg_h");
      }
      ic.bias_fixed = vec3(in0, "bias_deg_h", Vec3::Zero()) * kDegPerHour;
    } else if (bias != "random") {
      throw ConfigError("initial.bias must be 'random' or 'fixed'");
    }
    ic.bias_std = scalar(in0, "bias_std_deg_h", 0.0) * kDegPerHour;
    ic.body_rate = vec3(in0, "body_rate_deg_s", ic.body_rate / kDeg) * kDeg;
    if (const auto q = quat(in0, "estimate_quat")) ic.estimate = *q;
    ic.estimate_bias = vec3(in0, "estimate_bias_deg_h", Vec3::Zero()) * kDegPerHour;
    ic.p0_attitude_sd = scalar(in0, "p0_attitude_deg", 0.0) * kDeg;
    ic.p0_bias_sd = scalar(in0, "p0_bias_deg_h", 0.0) * kDegPerHour;
  } catch (const boost::property_tree::ptree_error& e) {
    throw ConfigError(e.what());
  }

  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

inline Scenario read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return read_scenario(in);
}

inline void write_scenario(std::ostream& os, const Scenario& s) {
  using config_detail::fmt;
  os << "[scenario]\n";
  os << "name = " << s.name << "\n";
  os << "runs = " << s.runs << "\n";
  os << "seed = " << s.seed << "\n";
  os << "duration_s = " << fmt(s.duration) << "\n";
  os << "filters = ";
  for (std::size_t i = 0; i < s.filters.size(); ++i) os << (i ? "," : "") << s.filters[i];
  os << "\n\n[spacecraft]\n";
  const Mat3& j = s.spacecraft.inertia;
  os << "inertia = " << fmt(j.diagonal());
  if (!j.isDiagonal(0.0)) os << " " << fmt(Vec3(j(0, 1), j(0, 2), j(1, 2)));
  os << "\n";
  os << "altitude_km = " << fmt(s.spacecraft.altitude_km) << "\n";
  os << "inclination_deg = " << fmt(s.spacecraft.inclination_deg) << "\n";
  os << "raan_deg = " << fmt(s.spacecraft.raan_deg) << "\n";
  os << "arg_perigee_deg = " << fmt(s.spacecraft.arg_perigee_deg) << "\n";
  os << "true_anomaly_deg = " << fmt(s.spacecraft.true_anomaly_deg) << "\n";
  os << "epoch_jd = " << fmt(s.spacecraft.epoch_jd) << "\n";
  os << "gravity_gradient = " << (s.spacecraft.gravity_gradient ? "true" : "false") << "\n\n";
  os << "[gyro]\n";
  os << "rate_hz = " << fmt(s.sensors.gyro_hz) << "\n";
  os << "sigma_v_rad = " << fmt(s.sensors.gyro_noise.sigma_v) << "\n";
  os << "sigma_u_rad = " << fmt(s.sensors.gyro_noise.sigma_u) << "\n";
  for (const VectorSensor& v : s.sensors.vector_sensors) {
    if (v.name != "sun" && v.name != "magnetometer") {
      throw ConfigError("sensor '" + v.name + "' has no config section");
    }
    os << "\n[" << v.name << "]\n";
    os << "rate_hz = " << fmt(v.rate_hz) << "\n";
    os << "sigma_deg = " << fmt(config_detail::isotropic_sigma(v.cov, v.name) / kDeg) << "\n";
    if (v.provider.kind == ReferenceProvider::Kind::Fixed) {
      os << "source = fixed\nvector = " << fmt(v.provider.fixed) << "\n";
    } else {
      os << "source = " << (v.name == "sun" ? "ephemeris" : "dipole") << "\n";
    }
    if (v.name == "magnetometer") {
      os << "pole_lat_deg = " << fmt(v.provider.pole_lat_deg) << "\n";
      os << "pole_lon_deg = " << fmt(v.provider.pole_lon_deg) << "\n";
    }
  }
  const InitialConditions& ic = s.initial;
  os << "\n[initial]\n";
  if (ic.attitude_fixed) {
    os << "attitude = fixed\nattitude_quat = " << fmt(*ic.attitude_fixed) << "\n";
  } else {
    os << "attitude = random\nattitude_std_deg = " << fmt(ic.attitude_std / kDeg) << "\n";
  }
  if (ic.bias_fixed) {
    os << "bias = fixed\nbias_deg_h = " << fmt(Vec3(*ic.bias_fixed / kDegPerHour)) << "\n";
  } else {
    os << "bias = random\nbias_std_deg_h = " << fmt(ic.bias_std / kDegPerHour) << "\n";
  }
  os << "body_rate_deg_s = " << fmt(Vec3(ic.body_rate / kDeg)) << "\n";
  os << "estimate_quat = " << fmt(ic.estimate) << "\n";
  os << "estimate_bias_deg_h = " << fmt(Vec3(ic.estimate_bias / kDegPerHour)) << "\n";
  os << "p0_attitude_deg = " << fmt(ic.p0_attitude_sd / kDeg) << "\n";
  os << "p0_bias_deg_h = " << fmt(ic.p0_bias_sd / kDegPerHour) << "\n";
}

}  // namespace mekf
