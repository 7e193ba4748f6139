// robomag command-line front end.
//
//   robomag [--config FILE] [--seed N] [--out PATH] [--units lab|si] <command> [options]
//
// Commands: scan, calibrate, schedule, partition, replace, odmr, fit-nv, replay.
// Exit codes: 0 success, 1 runtime/algorithmic failure, 2 usage or configuration error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "robomag/alignment.hpp"
#include "robomag/config.hpp"
#include "robomag/csv.hpp"
#include "robomag/odmr.hpp"

namespace fs = std::filesystem;
using namespace robomag;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Failure that carries an exit code and, optionally, a JSON body to emit.
struct CommandFailure {
  int code;
  std::string message;
  std::optional<Json> body;
};

/// Boundary units for command-line values: lab = degrees and millitesla, si = radians and tesla.
struct Units {
  bool si = false;
  double angle(double v) const { return si ? v : deg2rad(v); }
  double field(double v) const { return si ? v : mT2T(v); }
};

struct Context {
  RunConfig config;
  std::uint64_t seed = 0;
  std::string units_name = "lab";
  Units units;
  std::string command;
  std::vector<std::string> args;  // subcommand tokens as recorded in artefacts
  std::string out;
};

Json run_record(const Context& ctx) {
  return {{"command", ctx.command},
          {"args", ctx.args},
          {"seed", ctx.seed},
          {"units", ctx.units_name},
          {"config", run_config_to_json(ctx.config)}};
}

void write_text(const Context& ctx, const std::string& text) {
  if (ctx.out.empty() || ctx.out == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  const fs::path target(ctx.out);
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::ConfigError, "cannot write " + tmp.string());
    f << text;
    f.flush();
    if (!f) throw Error(ErrorKind::ConfigError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::ConfigError, "cannot move output into place: " + ec.message());
  }
}

void emit_csv(const Context& ctx, CsvTable table, const std::vector<std::string>& extra_comments = {}) {
  table.comments.insert(table.comments.begin(), " robomag " + run_record(ctx).dump());
  for (const auto& c : extra_comments) table.comments.push_back(" " + c);
  std::ostringstream os;
  write_csv(os, table);
  write_text(ctx, os.str());
}

void emit_json(const Context& ctx, Json body) {
  body["run"] = run_record(ctx);
  write_text(ctx, body.dump(2) + "\n");
}

Json pose_json(const Pose& p) {
  return {{"position_m", {p.position.x(), p.position.y(), p.position.z()}},
          {"alpha_deg", {rad2deg(p.alpha_x), rad2deg(p.alpha_y), rad2deg(p.alpha_z)}}};
}

Json field_json(const FieldVector& b) { return Json::array({T2mT(b.x()), T2mT(b.y()), T2mT(b.z())}); }

/// Angle range given on the command line as LO HI STEP in boundary units.
AngleRange angle_range(const std::vector<double>& v, const Units& u) {
  if (v.size() != 3) throw Error(ErrorKind::InvalidArgument, "angle range needs LO HI STEP");
  if (!(v[2] > 0.0) || v[1] < v[0]) throw Error(ErrorKind::InvalidArgument, "angle range needs LO <= HI and STEP > 0");
  return {u.angle(v[0]), u.angle(v[1]), u.angle(v[2])};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

struct ScanArgs {
  std::vector<double> alpha_y{0, 90, 5};
  std::vector<double> alpha_z{0, 90, 5};
  std::optional<double> standoff;
  bool quantise = false;
  double noise = 0.0;
};

void add_grid_options(CLI::App* c, ScanArgs& a) {
  c->add_option("--alpha-y", a.alpha_y, "alpha_y range LO HI STEP")->expected(3)->capture_default_str();
  c->add_option("--alpha-z", a.alpha_z, "alpha_z range LO HI STEP")->expected(3)->capture_default_str();
  c->add_option("--standoff", a.standoff, "magnet-centre to sample distance, m (default: config)");
  c->add_flag("--quantise", a.quantise, "snap magnet positions to the configured linear resolution");
}

std::vector<ScanPoint> run_scan_grid(const Context& ctx, const ScanArgs& a) {
  return sphere_segment_scan(ctx.config.sample, angle_range(a.alpha_y, ctx.units), angle_range(a.alpha_z, ctx.units),
                             a.standoff.value_or(ctx.config.standoff), ctx.config.magnet,
                             a.quantise ? ctx.config.resolution : 0.0);
}

int cmd_scan(const Context& ctx, const ScanArgs& a) {
  auto points = run_scan_grid(ctx, a);
  HallSensor hall(ctx.units.field(a.noise), subsystem_seed(ctx.seed, "hall"));
  CsvTable t;
  t.header = {"alpha_y_deg", "alpha_z_deg", "Bx_mT", "By_mT", "Bz_mT", "angular_error_deg", "order_index"};
  std::vector<double> errors;
  for (auto& p : points) {
    FieldVector b = p.predicted_field;
    if (a.noise > 0.0) {
      p.measured_field = hall.measure(p.predicted_field);
      b = *p.measured_field;
    }
    const double err = rad2deg(angular_error(b, unit_normal(p.alpha_y, p.alpha_z)));
    errors.push_back(err);
    t.rows.push_back({rad2deg(p.alpha_y), rad2deg(p.alpha_z), T2mT(b.x()), T2mT(b.y()), T2mT(b.z()), err,
                      static_cast<double>(p.order_index)});
  }
  // mode over 0.1 deg bins
  std::map<long, int> bins;
  for (double e : errors) ++bins[std::lround(std::floor(e / 0.1))];
  const auto mode = std::max_element(bins.begin(), bins.end(), [](auto& x, auto& y) { return x.second < y.second; });
  const double max_err = *std::max_element(errors.begin(), errors.end());
  emit_csv(ctx, t);
  std::cerr << "scan: points " << points.size() << " mean_error_deg " << format_number(mean_of(errors))
            << " mode_error_deg " << format_number((static_cast<double>(mode->first) + 0.5) * 0.1) << " max_error_deg "
            << format_number(max_err) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string input;
  bool simulate = false;
  std::vector<double> arc{-60, 60, 10};
  double offset_y = 0.0;
  std::vector<double> offset_z{0.0};
  double noise = 0.0;
};

CalibrationGeometry calibration_geometry(const Context& ctx, int masses) {
  CalibrationGeometry g;
  g.sample = ctx.config.sample;
  g.surface_gap = ctx.config.surface_gap;
  g.magnets = stacked_magnets(ctx.config.magnet, masses);
  return g;
}

int cmd_calibrate(const Context& ctx, const CalibrateArgs& a) {
  if (a.simulate) {
    if (a.offset_z.empty()) throw Error(ErrorKind::InvalidArgument, "--offset-z needs at least one value");
    const int masses = static_cast<int>(a.offset_z.size());
    const auto g = calibration_geometry(ctx, masses);
    const AngleRange arc = angle_range(a.arc, ctx.units);
    HallSensor hall(ctx.units.field(a.noise), subsystem_seed(ctx.seed, "hall"));
    CsvTable t;
    t.header = {"alpha_y_deg", "alpha_z_deg", "mass_index", "Bx_mT", "By_mT", "Bz_mT"};
    for (int m = 0; m < masses; ++m) {
      for (std::size_t i = 0; i < arc.count(); ++i) {
        const double ay = arc.at(i);
        const FieldVector b = hall.measure(calibration_model(g, ay + ctx.units.angle(a.offset_y),
                                                             ctx.units.angle(a.offset_z[static_cast<std::size_t>(m)]), m));
        t.rows.push_back({rad2deg(ay), 0.0, static_cast<double>(m), T2mT(b.x()), T2mT(b.y()), T2mT(b.z())});
      }
    }
    emit_csv(ctx, t);
    return kExitOk;
  }
  if (a.input.empty()) throw Error(ErrorKind::InvalidArgument, "calibrate needs --input or --simulate");
  const CsvTable in = load_csv(a.input);
  const std::size_t cy = in.column("alpha_y_deg"), cz = in.column("alpha_z_deg"), cm = in.column("mass_index"),
                    bx = in.column("Bx_mT"), by = in.column("By_mT"), bz = in.column("Bz_mT");
  std::vector<CalibrationSample> samples;
  int masses = 0;
  for (const auto& r : in.rows) {
    if (r[cm] < 0 || r[cm] != std::floor(r[cm])) throw Error(ErrorKind::ParseError, "mass_index must be a non-negative integer");
    const int m = static_cast<int>(r[cm]);
    masses = std::max(masses, m + 1);
    samples.push_back({deg2rad(r[cy]), deg2rad(r[cz]), m, FieldVector(mT2T(r[bx]), mT2T(r[by]), mT2T(r[bz]))});
  }
  const auto res = calibrate_offsets(samples, calibration_geometry(ctx, masses));
  Json dz = Json::array(), sdz = Json::array();
  for (std::size_t k = 0; k < res.delta_alpha_z.size(); ++k) {
    dz.push_back(rad2deg(res.delta_alpha_z[k]));
    sdz.push_back(rad2deg(res.sigma_delta_alpha_z[k]));
  }
  emit_json(ctx, {{"status", "ok"},
                  {"samples", samples.size()},
                  {"delta_alpha_y_deg", rad2deg(res.delta_alpha_y)},
                  {"sigma_delta_alpha_y_deg", rad2deg(res.sigma_delta_alpha_y)},
                  {"delta_alpha_z_deg", dz},
                  {"sigma_delta_alpha_z_deg", sdz},
                  {"residual_rms_mT", T2mT(res.residual_rms)}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ScheduleArgs {
  std::vector<double> targets;
  std::vector<double> ramp;
  std::vector<double> direction{0, 0};
  double min_standoff = 0.04;
  double max_standoff = 0.5;
};

int cmd_schedule(const Context& ctx, const ScheduleArgs& a) {
  std::vector<double> targets;
  for (double t : a.targets) targets.push_back(ctx.units.field(t));
  if (!a.ramp.empty()) {
    if (a.ramp.size() != 3 || a.ramp[2] < 1 || a.ramp[2] != std::floor(a.ramp[2]))
      throw Error(ErrorKind::InvalidArgument, "--ramp needs LO HI N with integer N >= 1");
    for (double v : linspace(a.ramp[0], a.ramp[1], static_cast<std::size_t>(a.ramp[2]))) targets.push_back(ctx.units.field(v));
  }
  if (targets.empty()) throw Error(ErrorKind::InvalidArgument, "schedule needs --targets or --ramp");
  if (a.direction.size() != 2) throw Error(ErrorKind::InvalidArgument, "--direction needs ALPHA_Y ALPHA_Z");
  AmplitudeOptions opt;
  opt.min_standoff = a.min_standoff;
  opt.max_standoff = a.max_standoff;
  opt.resolution = ctx.config.resolution;
  const auto s = amplitude_schedule(targets, ctx.config.magnet,
                                    unit_normal(ctx.units.angle(a.direction[0]), ctx.units.angle(a.direction[1])),
                                    ctx.config.sample, opt);
  CsvTable t;
  t.header = {"target_mT", "distance_m", "achieved_mT", "error_mT", "error_bound_mT"};
  for (std::size_t i = 0; i < s.targets.size(); ++i)
    t.rows.push_back({T2mT(s.targets[i]), s.distances[i], T2mT(s.achieved[i]), T2mT(s.errors[i]), T2mT(s.error_bounds[i])});
  emit_csv(ctx, t);
  double worst = 0.0;
  for (double e : s.errors) worst = std::max(worst, std::abs(e));
  std::cerr << "schedule: targets " << s.targets.size() << " max_abs_error_mT " << format_number(T2mT(worst)) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PartitionArgs {
  ScanArgs grid;
  std::string taught;
};

int cmd_partition(const Context& ctx, const PartitionArgs& a) {
  const Environment env = ctx.config.load_environment();
  if (!a.taught.empty()) {
    const CsvTable in = load_csv(a.taught);
    std::array<std::size_t, 6> qc{};
    for (std::size_t i = 0; i < 6; ++i) qc[i] = in.column("q" + std::to_string(i + 1) + "_rad");
    const std::size_t bx = in.column("Bx_mT"), by = in.column("By_mT"), bz = in.column("Bz_mT");
    std::vector<TaughtPose> taught;
    for (const auto& r : in.rows) {
      TaughtPose tp;
      for (int i = 0; i < 6; ++i) tp.joints[i] = r[qc[static_cast<std::size_t>(i)]];
      tp.measured = FieldVector(mT2T(r[bx]), mT2T(r[by]), mT2T(r[bz]));
      taught.push_back(tp);
    }
    const auto rep = evaluate_taught_poses(taught, ctx.config.dh, ctx.config.magnet, ctx.config.sample, ctx.config.body, env);
    CsvTable t;
    t.header = {"index", "x_m", "y_m", "z_m", "Bx_pred_mT", "By_pred_mT", "Bz_pred_mT", "Bx_mT", "By_mT", "Bz_mT",
                "angular_error_deg", "similarity", "clear", "min_distance_m"};
    for (std::size_t i = 0; i < rep.size(); ++i) {
      const auto& r = rep[i];
      t.rows.push_back({static_cast<double>(i), r.pose.position.x(), r.pose.position.y(), r.pose.position.z(),
                        T2mT(r.predicted.x()), T2mT(r.predicted.y()), T2mT(r.predicted.z()), T2mT(r.measured.x()),
                        T2mT(r.measured.y()), T2mT(r.measured.z()), rad2deg(r.angular_error), r.similarity,
                        r.collision.clear ? 1.0 : 0.0, r.collision.min_distance});
    }
    emit_csv(ctx, t);
    return kExitOk;
  }
  const auto points = run_scan_grid(ctx, a.grid);
  std::vector<Pose> poses;
  for (const auto& p : points) poses.push_back(p.pose);
  const auto part = partition_pose_dictionary(poses, ctx.config.dh, ctx.config.body, env, JointConfig::Zero());
  CsvTable t;
  t.header = {"order_index", "alpha_y_deg", "alpha_z_deg", "x_m", "y_m", "z_m", "status", "min_distance_m",
              "q1_rad", "q2_rad", "q3_rad", "q4_rad", "q5_rad", "q6_rad"};
  std::array<int, 3> counts{};
  for (std::size_t i = 0; i < part.size(); ++i) {
    const auto& f = part[i];
    ++counts[static_cast<std::size_t>(f.status)];
    std::vector<double> row{static_cast<double>(points[i].order_index), rad2deg(points[i].alpha_y), rad2deg(points[i].alpha_z),
                            f.pose.position.x(), f.pose.position.y(), f.pose.position.z(),
                            static_cast<double>(f.status), f.min_distance};
    for (int k = 0; k < 6; ++k) row.push_back(f.joints ? (*f.joints)[k] : std::numeric_limits<double>::quiet_NaN());
    t.rows.push_back(std::move(row));
  }
  emit_csv(ctx, t, {"status: 0 = Reachable, 1 = IkFailure, 2 = Collision"});
  std::cerr << "partition: reachable " << counts[0] << " ik_failure " << counts[1] << " collision " << counts[2] << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReplaceArgs {
  std::optional<double> alpha_y, alpha_z;
  bool batch = false;
  ScanArgs grid;
  std::string axis = "z";
  double step = 5e-3;
  int max_steps = 40;
};

Json plan_json(const ReplacementPlan& p) {
  Json q = Json::array();
  for (int i = 0; i < 6; ++i) q.push_back(p.final_joints[i]);
  return {{"status", "ok"},
          {"original_pose", pose_json(p.original_pose)},
          {"displaced_pose", pose_json(p.displaced_pose)},
          {"rotated_pose", pose_json(p.rotated_pose)},
          {"final_pose", pose_json(p.final_pose)},
          {"target_field_mT", field_json(p.target_field)},
          {"displaced_field_mT", field_json(p.displaced_field)},
          {"rotated_field_mT", field_json(p.rotated_field)},
          {"achieved_field_mT", field_json(p.achieved_field)},
          {"similarity", p.similarity},
          {"displacement_m", p.displacement},
          {"rotation_deg", rad2deg(p.rotation_angle)},
          {"far_field_violated", p.far_field_violated},
          {"candidates_tried", p.candidates_tried},
          {"final_joints_rad", q}};
}

int cmd_replace(const Context& ctx, const ReplaceArgs& a) {
  ReplacementOptions opt;
  if (a.axis == "y") opt.axis = DisplacementAxis::Y;
  else if (a.axis == "z") opt.axis = DisplacementAxis::Z;
  else throw Error(ErrorKind::InvalidArgument, "--axis must be y or z");
  opt.step = a.step;
  opt.max_steps = a.max_steps;
  const Environment env = ctx.config.load_environment();
  const auto& c = ctx.config;

  if (a.batch) {
    const auto points = run_scan_grid(ctx, a.grid);
    std::vector<Pose> poses;
    for (const auto& p : points) poses.push_back(p.pose);
    const auto part = partition_pose_dictionary(poses, c.dh, c.body, env, JointConfig::Zero());
    Json plans = Json::array();
    int forbidden = 0, replaced = 0, similar = 0, far_field = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (part[i].status != FeasibilityStatus::Collision) continue;
      ++forbidden;
      Json entry;
      try {
        const auto plan = replace_forbidden_pose(points[i].pose, c.sample, c.magnet, env, c.dh, c.body, opt);
        ++replaced;
        if (plan.similarity >= 0.95) ++similar;
        if (plan.far_field_violated) ++far_field;
        entry = plan_json(plan);
      } catch (const Error& e) {
        entry = {{"status", std::string(to_string(e.kind()))}, {"message", e.what()}};
      }
      entry["alpha_y_deg"] = rad2deg(points[i].alpha_y);
      entry["alpha_z_deg"] = rad2deg(points[i].alpha_z);
      plans.push_back(entry);
    }
    const double frac = forbidden ? static_cast<double>(similar) / forbidden : 1.0;
    emit_json(ctx, {{"summary",
                     {{"poses", points.size()},
                      {"forbidden", forbidden},
                      {"replaced", replaced},
                      {"similarity_at_least_0_95", similar},
                      {"fraction_similarity_at_least_0_95", frac},
                      {"far_field_violated", far_field}}},
                    {"plans", plans}});
    std::cerr << "replace: forbidden " << forbidden << " replaced " << replaced << " S>=0.95 " << similar << "\n";
    return kExitOk;
  }

  if (!a.alpha_y || !a.alpha_z) throw Error(ErrorKind::InvalidArgument, "replace needs --alpha-y and --alpha-z, or --batch");
  const Pose forbidden = magnet_pose_for_field_direction(c.sample, ctx.units.angle(*a.alpha_y), ctx.units.angle(*a.alpha_z),
                                                         a.grid.standoff.value_or(c.standoff));
  try {
    const auto plan = replace_forbidden_pose(forbidden, c.sample, c.magnet, env, c.dh, c.body, opt);
    emit_json(ctx, plan_json(plan));
    return kExitOk;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoReachableDisplacement && e.kind() != ErrorKind::FinalPoseForbidden) throw;
    throw CommandFailure{kExitRuntime, e.what(),
                         Json{{"status", std::string(to_string(e.kind()))},
                              {"message", e.what()},
                              {"original_pose", pose_json(forbidden)}}};
  }
}

// ---------------------------------------------------------------------------

struct OdmrArgs {
  std::string input;
  std::vector<double> field{0, 0, 0};
  bool nv_frame = false;
  std::vector<double> range_mhz;
  int points = 2001;
  double linewidth_mhz = 1.0;
  double depth = 0.02;
  double noise = 0.0;
};

int cmd_odmr(const Context& ctx, const OdmrArgs& a) {
  const NVParams& nv = ctx.config.nv;
  if (!a.input.empty()) {
    const CsvTable in = load_csv(a.input);
    const std::size_t cf = in.column("freq_MHz"), cc = in.column("contrast");
    OdmrSpectrum s;
    for (const auto& r : in.rows) {
      s.frequencies.push_back(r[cf] * 1e6);
      s.contrast.push_back(r[cc]);
    }
    for (std::size_t i = 1; i < s.frequencies.size(); ++i)
      if (!(s.frequencies[i] > s.frequencies[i - 1])) throw Error(ErrorKind::ParseError, "freq_MHz must be strictly increasing");
    const auto fit = fit_resonances(s);
    emit_json(ctx, {{"status", "ok"},
                    {"f_minus_MHz", fit.pair.f_minus * 1e-6},
                    {"f_plus_MHz", fit.pair.f_plus * 1e-6},
                    {"splitting_MHz", fit.pair.splitting() * 1e-6},
                    {"sigma_minus_MHz", fit.sigma_minus * 1e-6},
                    {"sigma_plus_MHz", fit.sigma_plus * 1e-6},
                    {"linewidth_MHz", fit.linewidth * 1e-6},
                    {"depth_minus", fit.depth_minus},
                    {"depth_plus", fit.depth_plus},
                    {"baseline", fit.baseline},
                    {"residual_rms", fit.residual_rms},
                    {"merged", fit.merged}});
    return kExitOk;
  }
  if (a.field.size() != 3) throw Error(ErrorKind::InvalidArgument, "--field needs BX BY BZ");
  if (a.points < 8) throw Error(ErrorKind::InvalidArgument, "--points must be >= 8");
  FieldVector b(ctx.units.field(a.field[0]), ctx.units.field(a.field[1]), ctx.units.field(a.field[2]));
  if (!a.nv_frame) b = world_to_nv_frame(b, nv);
  double lo = nv.D * 1e-6 - 150.0, hi = nv.D * 1e-6 + 150.0;
  if (!a.range_mhz.empty()) {
    if (a.range_mhz.size() != 2 || !(a.range_mhz[1] > a.range_mhz[0]))
      throw Error(ErrorKind::InvalidArgument, "--range needs LO < HI in MHz");
    lo = a.range_mhz[0];
    hi = a.range_mhz[1];
  }
  const auto grid = linspace(lo * 1e6, hi * 1e6, static_cast<std::size_t>(a.points));
  const auto s = odmr_spectrum(nv, b, a.linewidth_mhz * 1e6, a.depth, grid, a.noise, subsystem_seed(ctx.seed, "odmr"));
  CsvTable t;
  t.header = {"freq_MHz", "contrast"};
  for (std::size_t i = 0; i < grid.size(); ++i) t.rows.push_back({s.frequencies[i] * 1e-6, s.contrast[i]});
  const auto res = resonances(nv, b);
  emit_csv(ctx, t, {"f_minus_MHz " + format_number(res.f_minus * 1e-6) + " f_plus_MHz " + format_number(res.f_plus * 1e-6)});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitNvArgs {
  std::string input;
  bool simulate = false;
  int points = 6;
  std::vector<double> alpha_y_b{20, 10};
  std::vector<double> alpha_z_b{40, 5};
  double b_max = 5.0;
  double b_variation = 0.0;
  double noise_khz = 0.0;
};

int cmd_fit_nv(const Context& ctx, const FitNvArgs& a) {
  const NVParams& nv = ctx.config.nv;
  if (a.simulate) {
    if (a.points < 1) throw Error(ErrorKind::InvalidArgument, "--points must be >= 1");
    if (a.alpha_y_b.size() != 2 || a.alpha_z_b.size() != 2)
      throw Error(ErrorKind::InvalidArgument, "--alpha-y-b and --alpha-z-b need START STEP");
    if (!(a.b_variation >= 0.0 && a.b_variation < 1.0)) throw Error(ErrorKind::InvalidArgument, "--b-variation must lie in [0, 1)");
    const double b_max = ctx.units.field(a.b_max);
    std::mt19937_64 rng(subsystem_seed(ctx.seed, "splitting-noise"));
    std::normal_distribution<double> noise(0.0, 1.0);
    CsvTable t;
    t.header = {"alpha_yB_deg", "alpha_zB_deg", "f_minus_MHz", "f_plus_MHz", "B_hall_mT"};
    for (int i = 0; i < a.points; ++i) {
      const double ay = ctx.units.angle(a.alpha_y_b[0] + i * a.alpha_y_b[1]);
      const double az = ctx.units.angle(a.alpha_z_b[0] + i * a.alpha_z_b[1]);
      const double frac = a.points > 1 ? static_cast<double>(i) / (a.points - 1) : 0.0;
      const double b = b_max * (1.0 - a.b_variation * frac);
      const double g = field_nv_angle(ay, az, nv.axis_alpha_y, nv.axis_alpha_z);
      const auto pair = cubic_resonances(nv.D, nv.Pi, nv.gamma_e * b_max, g);
      // splitting scaled linearly with the Hall magnitude so normalisation restores the b_max value
      double split = pair.splitting() * b / b_max;
      if (a.noise_khz > 0.0) split += a.noise_khz * 1e3 * noise(rng);
      const double mid = 0.5 * (pair.f_minus + pair.f_plus);
      t.rows.push_back({rad2deg(ay), rad2deg(az), (mid - 0.5 * split) * 1e-6, (mid + 0.5 * split) * 1e-6, T2mT(b)});
    }
    emit_csv(ctx, t);
    return kExitOk;
  }
  if (a.input.empty()) throw Error(ErrorKind::InvalidArgument, "fit-nv needs --input or --simulate");
  const CsvTable in = load_csv(a.input);
  const std::size_t cy = in.column("alpha_yB_deg"), cz = in.column("alpha_zB_deg"), cm = in.column("f_minus_MHz"),
                    cp = in.column("f_plus_MHz"), cb = in.column("B_hall_mT");
  std::vector<double> splits, mags;
  for (const auto& r : in.rows) {
    if (r[cp] < r[cm]) throw Error(ErrorKind::ParseError, "f_plus_MHz below f_minus_MHz");
    splits.push_back((r[cp] - r[cm]) * 1e6);
    mags.push_back(mT2T(r[cb]));
  }
  const auto norm = normalize_splittings(splits, mags);
  std::vector<TrajectoryPoint> traj;
  for (std::size_t i = 0; i < in.rows.size(); ++i)
    traj.push_back({deg2rad(in.rows[i][cy]), deg2rad(in.rows[i][cz]), norm[i]});
  try {
    const auto fit = fit_orientation(traj, nv.D, nv.Pi, nv.gamma_e);
    Json cov = Json::array();
    for (int i = 0; i < 3; ++i) cov.push_back({fit.covariance(i, 0), fit.covariance(i, 1), fit.covariance(i, 2)});
    emit_json(ctx, {{"status", "ok"},
                    {"points", traj.size()},
                    {"alpha_y_nv_deg", rad2deg(fit.alpha_y_nv)},
                    {"alpha_z_nv_deg", rad2deg(fit.alpha_z_nv)},
                    {"B_fit_mT", T2mT(fit.B_fit)},
                    {"sigma_alpha_y_deg", rad2deg(fit.sigma_alpha_y)},
                    {"sigma_alpha_z_deg", rad2deg(fit.sigma_alpha_z)},
                    {"sigma_B_mT", T2mT(fit.sigma_B)},
                    {"covariance_rad_rad_T", cov},
                    {"residual_rms_MHz", fit.residual_rms * 1e-6},
                    {"starts", fit.starts},
                    {"notes", fit.notes}});
    return kExitOk;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateFit) throw;
    throw CommandFailure{kExitRuntime, e.what(),
                         Json{{"status", "DegenerateFit"},
                              {"message", e.what()},
                              {"notes", "all poses give the same field-to-axis angle; add poses that vary it"}}};
  }
}

// ---------------------------------------------------------------------------

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::ParseError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InsufficientData:
    case ErrorKind::JointLimit:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

/// Options given to the subcommand, in declaration order, with file arguments made absolute so
/// artefacts replay from any directory.
std::vector<std::string> recorded_args(const CLI::App* sub) {
  std::vector<std::string> out;
  for (const CLI::Option* o : sub->get_options()) {
    if (o->count() == 0 || o->get_name() == "--help") continue;
    const std::string name = o->get_name(false, true);
    if (o->get_items_expected_max() == 0) {
      out.push_back(name);
      continue;
    }
    const bool is_path = name == "--input" || name == "--taught";
    std::string joined;
    if (o->get_delimiter() != '\0') {
      for (const auto& r : o->results()) joined += (joined.empty() ? "" : ",") + r;
      out.push_back(name);
      out.push_back(joined);
      continue;
    }
    out.push_back(name);
    for (const auto& r : o->results()) out.push_back(is_path ? fs::absolute(r).lexically_normal().string() : r);
  }
  return out;
}

struct Invocation {
  std::vector<std::string> tokens;   // everything after the program name
  std::optional<RunConfig> config;   // injected by replay
};

int run(const Invocation& inv);

Json read_artefact_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, path + ": cannot open");
  std::string first;
  std::getline(in, first);
  const std::string tag = "# robomag ";
  if (first.rfind(tag, 0) == 0) return Json::parse(first.substr(tag.size()));
  in.seekg(0);
  try {
    const Json j = Json::parse(in);
    if (j.contains("run")) return j.at("run");
  } catch (const Json::parse_error&) {
  }
  throw Error(ErrorKind::ConfigError, path + ": no embedded run record");
}

int cmd_replay(const std::string& artefact, const std::string& out) {
  const Json rec = read_artefact_record(artefact);
  try {
    Invocation inv;
    inv.config = run_config_from_json(rec.at("config"), fs::current_path());
    inv.tokens = {"--seed", std::to_string(rec.at("seed").get<std::uint64_t>()), "--units", rec.at("units").get<std::string>()};
    if (!out.empty()) {
      inv.tokens.push_back("--out");
      inv.tokens.push_back(out);
    }
    inv.tokens.push_back(rec.at("command").get<std::string>());
    for (const auto& t : rec.at("args")) inv.tokens.push_back(t.get<std::string>());
    return run(inv);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigError, artefact + ": malformed run record: " + e.what());
  }
}

int run(const Invocation& inv) {
  CLI::App app{"Robot-carried magnet field planning and NV-centre ODMR analysis"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out, units = "lab";
  app.add_option("--config", config_path, "run configuration (JSON)");
  app.add_option("--seed", seed, "64-bit seed (overrides the config)");
  app.add_option("--out", out, "output file (default: stdout); written atomically");
  app.add_option("--units", units, "boundary units for option values: lab (deg, mT) or si (rad, T)")
      ->check(CLI::IsMember({"lab", "si"}))
      ->capture_default_str();

  ScanArgs scan;
  auto* c_scan = app.add_subcommand("scan", "sphere-segment scan with predicted fields");
  add_grid_options(c_scan, scan);
  c_scan->add_option("--noise", scan.noise, "Hall-sensor noise sigma per axis (mT); report measured fields");

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "fit pose offsets to calibration-arc data");
  c_cal->add_option("--input", cal.input, "calibration CSV");
  c_cal->add_flag("--simulate", cal.simulate, "write a synthetic calibration CSV instead");
  c_cal->add_option("--arc", cal.arc, "commanded alpha_y arc LO HI STEP")->expected(3)->capture_default_str();
  c_cal->add_option("--offset-y", cal.offset_y, "injected alpha_y offset");
  c_cal->add_option("--offset-z", cal.offset_z, "injected alpha_z offset per mass configuration")->delimiter(',');
  c_cal->add_option("--noise", cal.noise, "Hall-sensor noise sigma per axis");

  ScheduleArgs sch;
  auto* c_sch = app.add_subcommand("schedule", "distances realising a list of field magnitudes");
  c_sch->add_option("--targets", sch.targets, "target magnitudes")->delimiter(',');
  c_sch->add_option("--ramp", sch.ramp, "linear ramp LO HI N")->expected(3);
  c_sch->add_option("--direction", sch.direction, "field direction ALPHA_Y ALPHA_Z")->expected(2);
  c_sch->add_option("--min-standoff", sch.min_standoff, "closest magnet-centre distance, m")->capture_default_str();
  c_sch->add_option("--max-standoff", sch.max_standoff, "farthest magnet-centre distance, m")->capture_default_str();

  PartitionArgs part;
  auto* c_part = app.add_subcommand("partition", "classify scan poses as reachable, IK failure or collision");
  add_grid_options(c_part, part.grid);
  c_part->add_option("--taught", part.taught, "taught-pose CSV (q1..q6_rad, Bx_mT, By_mT, Bz_mT)");

  ReplaceArgs rep;
  auto* c_rep = app.add_subcommand("replace", "replace a collision-forbidden pose");
  c_rep->add_option("--alpha-y", rep.alpha_y, "forbidden pose alpha_y");
  c_rep->add_option("--alpha-z", rep.alpha_z, "forbidden pose alpha_z");
  c_rep->add_flag("--batch", rep.batch, "replace every forbidden pose of a scan grid");
  c_rep->add_option("--grid-alpha-y", rep.grid.alpha_y, "batch grid alpha_y LO HI STEP")->expected(3);
  c_rep->add_option("--grid-alpha-z", rep.grid.alpha_z, "batch grid alpha_z LO HI STEP")->expected(3);
  c_rep->add_option("--standoff", rep.grid.standoff, "magnet-centre to sample distance, m");
  c_rep->add_option("--axis", rep.axis, "displacement axis y or z")->capture_default_str();
  c_rep->add_option("--step", rep.step, "displacement search step, m")->capture_default_str();
  c_rep->add_option("--max-steps", rep.max_steps, "search steps per direction")->capture_default_str();

  OdmrArgs od;
  auto* c_od = app.add_subcommand("odmr", "simulate an ODMR spectrum, or fit one with --input");
  c_od->add_option("--input", od.input, "spectrum CSV to fit");
  c_od->add_option("--field", od.field, "field BX BY BZ (world frame unless --nv-frame)")->expected(3);
  c_od->add_flag("--nv-frame", od.nv_frame, "field is given in the NV frame");
  c_od->add_option("--range", od.range_mhz, "sweep LO HI in MHz")->expected(2);
  c_od->add_option("--points", od.points, "sweep points")->capture_default_str();
  c_od->add_option("--linewidth", od.linewidth_mhz, "FWHM, MHz")->capture_default_str();
  c_od->add_option("--depth", od.depth, "dip depth")->capture_default_str();
  c_od->add_option("--noise", od.noise, "contrast noise sigma");

  FitNvArgs fn;
  auto* c_fn = app.add_subcommand("fit-nv", "fit the NV axis to a trajectory of splittings");
  c_fn->add_option("--input", fn.input, "trajectory CSV");
  c_fn->add_flag("--simulate", fn.simulate, "write a synthetic trajectory CSV from the configured NV axis");
  c_fn->add_option("--points", fn.points, "trajectory length")->capture_default_str();
  c_fn->add_option("--alpha-y-b", fn.alpha_y_b, "alpha_yB START STEP")->expected(2);
  c_fn->add_option("--alpha-z-b", fn.alpha_z_b, "alpha_zB START STEP")->expected(2);
  c_fn->add_option("--b-max", fn.b_max, "largest Hall magnitude")->capture_default_str();
  c_fn->add_option("--b-variation", fn.b_variation, "fractional Hall-magnitude drop along the trajectory");
  c_fn->add_option("--noise", fn.noise_khz, "splitting noise sigma, kHz");

  std::string artefact;
  auto* c_replay = app.add_subcommand("replay", "re-run the command recorded in an artefact");
  c_replay->add_option("artefact", artefact, "CSV or JSON produced by robomag")->required();

  std::vector<std::string> reversed(inv.tokens.rbegin(), inv.tokens.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub == c_replay) return cmd_replay(artefact, out);

  Context ctx;
  ctx.config = inv.config ? *inv.config : (config_path.empty() ? RunConfig{} : load_run_config(config_path));
  if (seed) ctx.config.seed = *seed;
  ctx.seed = ctx.config.seed;
  ctx.units_name = units;
  ctx.units.si = units == "si";
  ctx.out = out;
  ctx.command = sub->get_name();
  ctx.args = recorded_args(sub);

  try {
    if (sub == c_scan) return cmd_scan(ctx, scan);
    if (sub == c_cal) return cmd_calibrate(ctx, cal);
    if (sub == c_sch) return cmd_schedule(ctx, sch);
    if (sub == c_part) return cmd_partition(ctx, part);
    if (sub == c_rep) return cmd_replace(ctx, rep);
    if (sub == c_od) return cmd_odmr(ctx, od);
    if (sub == c_fn) return cmd_fit_nv(ctx, fn);
  } catch (const CommandFailure& f) {
    if (f.body) emit_json(ctx, *f.body);
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  Invocation inv;
  for (int i = 1; i < argc; ++i) inv.tokens.emplace_back(argv[i]);
  try {
    return run(inv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
