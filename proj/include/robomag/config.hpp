#pragma once

// JSON configuration: D-H tables, magnet blocks, robot bodies, environment
// manifests and the run configuration that ties them together. Relative paths
// resolve against the directory of the file that names them.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "robomag/environment.hpp"
#include "robomag/kinematics.hpp"
#include "robomag/magnetostatics.hpp"
#include "robomag/nvspin.hpp"

namespace robomag {

using Json = nlohmann::json;

namespace detail {

[[noreturn]] inline void config_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::ConfigError, where + ": " + what);
}

inline const Json& member(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) config_fail(where, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) config_fail(where.empty() ? key : where + "." + key, "missing");
  return *it;
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) config_fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(where, "not finite");
  return v;
}

inline double number_at(const Json& j, const std::string& key, const std::string& where) {
  return number(member(j, key, where), where.empty() ? key : where + "." + key);
}

inline double number_or(const Json& j, const std::string& key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return number(j.at(key), where.empty() ? key : where + "." + key);
}

inline Vec3 vec3(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) config_fail(where, "expected an array of 3 numbers");
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]"), number(j[2], where + "[2]")};
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, path.string() + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
}

inline std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : std::filesystem::absolute(base_dir / path).lexically_normal();
}

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

}  // namespace detail

// ---------------------------------------------------------------------------
// D-H table
//
// {"joints": [{"a_m", "alpha_rad", "d_m", "theta_offset_rad", "q_min_rad",
//   "q_max_rad"} x 6], "tool_offset_m"}

inline DHTable dh_from_json(const Json& j, const std::string& where = "dh") {
  const Json& joints = detail::member(j, "joints", where);
  if (!joints.is_array() || joints.size() != 6)
    detail::config_fail(where + ".joints", "expected exactly 6 rows");
  DHTable dh;
  for (std::size_t i = 0; i < 6; ++i) {
    const std::string w = where + ".joints[" + std::to_string(i) + "]";
    const Json& r = joints[i];
    DHRow& row = dh.rows[i];
    row.a = detail::number_at(r, "a_m", w);
    row.alpha = detail::number_at(r, "alpha_rad", w);
    row.d = detail::number_at(r, "d_m", w);
    row.theta_offset = detail::number_at(r, "theta_offset_rad", w);
    row.q_min = detail::number_at(r, "q_min_rad", w);
    row.q_max = detail::number_at(r, "q_max_rad", w);
    if (!(row.q_min < row.q_max)) detail::config_fail(w + ".q_max_rad", "must exceed q_min_rad");
  }
  dh.tool_offset = detail::number_at(j, "tool_offset_m", where);
  if (!(dh.tool_offset >= 0.0)) detail::config_fail(where + ".tool_offset_m", "must be >= 0");
  return dh;
}

inline Json dh_to_json(const DHTable& dh) {
  Json rows = Json::array();
  for (const auto& r : dh.rows) {
    rows.push_back({{"a_m", r.a},
                    {"alpha_rad", r.alpha},
                    {"d_m", r.d},
                    {"theta_offset_rad", r.theta_offset},
                    {"q_min_rad", r.q_min},
                    {"q_max_rad", r.q_max}});
  }
  return {{"joints", rows}, {"tool_offset_m", dh.tool_offset}};
}

inline DHTable load_dh_table(const std::filesystem::path& path) {
  return dh_from_json(detail::read_json_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Magnet
//
// {"outer_radius_m", "inner_radius_m", "length_m"} plus either
// "magnetisation_A_per_m" or "remanence_T".

inline MagnetSpec magnet_from_json(const Json& j, const std::string& where = "magnet") {
  MagnetSpec s;
  s.outer_radius = detail::number_at(j, "outer_radius_m", where);
  s.inner_radius = detail::number_or(j, "inner_radius_m", 0.0, where);
  s.length = detail::number_at(j, "length_m", where);
  const bool has_m = j.contains("magnetisation_A_per_m"), has_br = j.contains("remanence_T");
  if (has_m == has_br) detail::config_fail(where, "give exactly one of magnetisation_A_per_m or remanence_T");
  s.magnetisation = has_m ? detail::number_at(j, "magnetisation_A_per_m", where)
                          : detail::number_at(j, "remanence_T", where) / kMu0;
  try {
    s.validate();
  } catch (const Error& e) {
    detail::config_fail(where, e.what());
  }
  return s;
}

inline Json magnet_to_json(const MagnetSpec& s) {
  return {{"outer_radius_m", s.outer_radius},
          {"inner_radius_m", s.inner_radius},
          {"length_m", s.length},
          {"magnetisation_A_per_m", s.magnetisation}};
}

// ---------------------------------------------------------------------------
// Robot body
//
// {"link_radii_m": [6 numbers]} (tool capsule derived from the magnet) or
// {"capsules": [{"frame", "p0_m", "p1_m", "radius_m"}, ...]}

inline RobotBody body_from_json(const Json& j, const DHTable& dh, const MagnetSpec& magnet,
                                const std::string& where = "body") {
  if (j.contains("capsules")) {
    RobotBody b;
    const Json& caps = j.at("capsules");
    if (!caps.is_array()) detail::config_fail(where + ".capsules", "expected an array");
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const std::string w = where + ".capsules[" + std::to_string(i) + "]";
      CollisionCapsule c;
      const Json& f = detail::member(caps[i], "frame", w);
      if (!f.is_number_integer()) detail::config_fail(w + ".frame", "expected an integer");
      c.frame = f.get<int>();
      c.p0 = detail::vec3(detail::member(caps[i], "p0_m", w), w + ".p0_m");
      c.p1 = detail::vec3(detail::member(caps[i], "p1_m", w), w + ".p1_m");
      c.radius = detail::number_at(caps[i], "radius_m", w);
      b.capsules.push_back(c);
    }
    try {
      b.validate();
    } catch (const Error& e) {
      detail::config_fail(where, e.what());
    }
    return b;
  }
  std::array<double, 6> radii{0.045, 0.04, 0.035, 0.03, 0.03, 0.025};
  if (j.contains("link_radii_m")) {
    const Json& r = j.at("link_radii_m");
    if (!r.is_array() || r.size() != 6) detail::config_fail(where + ".link_radii_m", "expected 6 numbers");
    for (std::size_t i = 0; i < 6; ++i) {
      radii[i] = detail::number(r[i], where + ".link_radii_m[" + std::to_string(i) + "]");
      if (!(radii[i] > 0.0)) detail::config_fail(where + ".link_radii_m[" + std::to_string(i) + "]", "must be > 0");
    }
  }
  return default_robot_body(dh, magnet, radii);
}

inline Json body_to_json(const RobotBody& b) {
  Json caps = Json::array();
  for (const auto& c : b.capsules)
    caps.push_back({{"frame", c.frame}, {"p0_m", detail::vec_json(c.p0)}, {"p1_m", detail::vec_json(c.p1)}, {"radius_m", c.radius}});
  return {{"capsules", caps}};
}

// ---------------------------------------------------------------------------
// Environment manifest
//
// {"meshes": [{"path", "translation_m"?, "rotation_rad"?}, ...]}

inline std::vector<MeshPlacement> manifest_from_json(const Json& j, const std::filesystem::path& base_dir,
                                                     const std::string& where = "environment") {
  std::vector<MeshPlacement> out;
  const Json& meshes = detail::member(j, "meshes", where);
  if (!meshes.is_array()) detail::config_fail(where + ".meshes", "expected an array");
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    const std::string w = where + ".meshes[" + std::to_string(i) + "]";
    const Json& m = meshes[i];
    const Json& p = detail::member(m, "path", w);
    if (!p.is_string()) detail::config_fail(w + ".path", "expected a string");
    MeshPlacement e;
    e.path = detail::resolve(base_dir, p.get<std::string>());
    if (!std::filesystem::exists(e.path)) detail::config_fail(w + ".path", "file not found: " + e.path.string());
    if (m.contains("translation_m")) e.translation = detail::vec3(m.at("translation_m"), w + ".translation_m");
    if (m.contains("rotation_rad")) e.rotation = detail::vec3(m.at("rotation_rad"), w + ".rotation_rad");
    out.push_back(e);
  }
  return out;
}

inline Json manifest_to_json(const std::vector<MeshPlacement>& manifest) {
  Json meshes = Json::array();
  for (const auto& e : manifest)
    meshes.push_back({{"path", e.path.string()},
                      {"translation_m", detail::vec_json(e.translation)},
                      {"rotation_rad", detail::vec_json(e.rotation)}});
  return {{"meshes", meshes}};
}

// ---------------------------------------------------------------------------
// NV parameters
//
// {"D_Hz", "Pi_Hz", "gamma_e_Hz_per_T", "axis_alpha_y_rad", "axis_alpha_z_rad"}, all optional.

inline NVParams nv_from_json(const Json& j, const std::string& where = "nv") {
  NVParams p;
  p.D = detail::number_or(j, "D_Hz", p.D, where);
  p.Pi = detail::number_or(j, "Pi_Hz", p.Pi, where);
  p.gamma_e = detail::number_or(j, "gamma_e_Hz_per_T", p.gamma_e, where);
  p.axis_alpha_y = detail::number_or(j, "axis_alpha_y_rad", p.axis_alpha_y, where);
  p.axis_alpha_z = detail::number_or(j, "axis_alpha_z_rad", p.axis_alpha_z, where);
  try {
    p.validate();
  } catch (const Error& e) {
    detail::config_fail(where, e.what());
  }
  return p;
}

inline Json nv_to_json(const NVParams& p) {
  return {{"D_Hz", p.D},
          {"Pi_Hz", p.Pi},
          {"gamma_e_Hz_per_T", p.gamma_e},
          {"axis_alpha_y_rad", p.axis_alpha_y},
          {"axis_alpha_z_rad", p.axis_alpha_z}};
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  DHTable dh = nominal_dh_table();
  MagnetSpec magnet = nominal_magnet();
  RobotBody body = default_robot_body(nominal_dh_table(), nominal_magnet());
  std::vector<MeshPlacement> environment;
  Vec3 sample = Vec3(0.3, 0.0, 0.15);
  double standoff = 0.1;      // m, scan radius (magnet centre to sample)
  double resolution = 5e-4;   // m
  double surface_gap = 0.02;  // m, calibration arc face-to-sample gap
  int calibration_masses = 3;
  NVParams nv;
  std::uint64_t seed = 0;

  Environment load_environment() const { return Environment::load(environment); }
};

/// Keys: "dh" (object or path), "magnet", "body", "environment" (object or
/// path), "sample_m", "standoff_m", "resolution_m", "calibration", "nv", "seed".
inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) detail::config_fail("config", "expected an object");
  RunConfig c;
  if (j.contains("dh")) {
    const Json& d = j.at("dh");
    if (d.is_string()) {
      const auto p = detail::resolve(base_dir, d.get<std::string>());
      c.dh = load_dh_table(p);
    } else {
      c.dh = dh_from_json(d, "dh");
    }
  }
  if (j.contains("magnet")) c.magnet = magnet_from_json(j.at("magnet"));
  c.body = j.contains("body") ? body_from_json(j.at("body"), c.dh, c.magnet) : default_robot_body(c.dh, c.magnet);
  if (j.contains("environment")) {
    const Json& e = j.at("environment");
    if (e.is_string()) {
      const auto p = detail::resolve(base_dir, e.get<std::string>());
      c.environment = manifest_from_json(detail::read_json_file(p), p.parent_path(), p.string());
    } else {
      c.environment = manifest_from_json(e, base_dir);
    }
  }
  if (j.contains("sample_m")) c.sample = detail::vec3(j.at("sample_m"), "sample_m");
  c.standoff = detail::number_or(j, "standoff_m", c.standoff, "");
  if (!(c.standoff > 0.0)) detail::config_fail("standoff_m", "must be > 0");
  c.resolution = detail::number_or(j, "resolution_m", c.resolution, "");
  if (!(c.resolution > 0.0)) detail::config_fail("resolution_m", "must be > 0");
  if (j.contains("calibration")) {
    const Json& cal = j.at("calibration");
    c.surface_gap = detail::number_or(cal, "surface_gap_m", c.surface_gap, "calibration");
    const double masses = detail::number_or(cal, "masses", c.calibration_masses, "calibration");
    if (!(masses >= 1.0) || masses != std::floor(masses)) detail::config_fail("calibration.masses", "expected a positive integer");
    c.calibration_masses = static_cast<int>(masses);
  }
  if (j.contains("nv")) c.nv = nv_from_json(j.at("nv"));
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
      detail::config_fail("seed", "expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(detail::read_json_file(path), std::filesystem::absolute(path).parent_path());
}

/// Fully resolved, self-contained form (tables inlined, paths absolute).
inline Json run_config_to_json(const RunConfig& c) {
  return {{"dh", dh_to_json(c.dh)},
          {"magnet", magnet_to_json(c.magnet)},
          {"body", body_to_json(c.body)},
          {"environment", manifest_to_json(c.environment)},
          {"sample_m", detail::vec_json(c.sample)},
          {"standoff_m", c.standoff},
          {"resolution_m", c.resolution},
          {"calibration", {{"surface_gap_m", c.surface_gap}, {"masses", c.calibration_masses}}},
          {"nv", nv_to_json(c.nv)},
          {"seed", c.seed}};
}

/// Independent stream seed for a named subsystem, derived from the run seed.
inline std::uint64_t subsystem_seed(std::uint64_t seed, std::string_view stream) {
  std::uint32_t h = 2166136261u;  // FNV-1a
  for (char ch : stream) h = (h ^ static_cast<unsigned char>(ch)) * 16777619u;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), h};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace robomag
