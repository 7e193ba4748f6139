#pragma once

// Field-generation algorithms on top of the magnet and arm models:
// sphere-segment scans, offset calibration, amplitude scheduling, the
// similarity score, and replacement of collision-forbidden poses.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "robomag/environment.hpp"
#include "robomag/kinematics.hpp"
#include "robomag/least_squares.hpp"
#include "robomag/magnetostatics.hpp"

namespace robomag {

/// Inclusive angle range lo, lo + step, ..., <= hi (rad).
struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  std::size_t count() const {
    if (!(step > 0.0) || hi < lo) return hi == lo ? 1 : 0;
    return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  }
  double at(std::size_t i) const { return lo + static_cast<double>(i) * step; }
};

struct ScanPoint {
  double alpha_y = 0.0;
  double alpha_z = 0.0;
  Pose pose;
  FieldVector predicted_field = FieldVector::Zero();
  std::optional<FieldVector> measured_field;
  std::size_t order_index = 0;
  std::size_t row = 0;  // alpha_y index
  std::size_t col = 0;  // alpha_z index
};

/// 3-axis Hall probe stand-in: true field plus independent Gaussian noise per axis.
class HallSensor {
 public:
  HallSensor(double noise_sigma_T, std::uint64_t seed) : sigma_(noise_sigma_T), rng_(seed) {}
  FieldVector measure(const FieldVector& truth) {
    if (!(sigma_ > 0.0)) return truth;
    std::normal_distribution<double> n(0.0, sigma_);
    return truth + FieldVector(n(rng_), n(rng_), n(rng_));
  }

 private:
  double sigma_;
  std::mt19937_64 rng_;
};

/// Meander scan over the (alpha_y, alpha_z) grid: row k runs alpha_z ascending
/// when k is even, descending when odd. `resolution` > 0 snaps magnet positions
/// to the robot's linear grid.
inline std::vector<ScanPoint> sphere_segment_scan(const Vec3& sample, const AngleRange& alpha_y,
                                                  const AngleRange& alpha_z, double standoff, const MagnetSpec& spec,
                                                  double resolution = 0.0) {
  if (!(standoff > 0.0)) throw Error(ErrorKind::InvalidArgument, "standoff must be > 0");
  const std::size_t ny = alpha_y.count(), nz = alpha_z.count();
  if (ny == 0 || nz == 0) throw Error(ErrorKind::InvalidArgument, "scan grid is empty");
  std::vector<ScanPoint> out;
  out.reserve(ny * nz);
  for (std::size_t r = 0; r < ny; ++r) {
    for (std::size_t k = 0; k < nz; ++k) {
      const std::size_t c = (r % 2 == 0) ? k : nz - 1 - k;
      ScanPoint sp;
      sp.row = r;
      sp.col = c;
      sp.alpha_y = alpha_y.at(r);
      sp.alpha_z = alpha_z.at(c);
      sp.pose = magnet_pose_for_field_direction(sample, sp.alpha_y, sp.alpha_z, standoff);
      if (resolution > 0.0) sp.pose.position = quantize_position(sp.pose.position, resolution);
      sp.predicted_field = cylinder_field(spec, sp.pose, sample);
      sp.order_index = out.size();
      out.push_back(sp);
    }
  }
  return out;
}

/// Angle between a field and a designed direction. Throws ZeroField.
inline double angular_error(const FieldVector& predicted, const UnitVector& designed) {
  const double n = predicted.norm();
  if (!(n > 0.0)) throw Error(ErrorKind::ZeroField, "field has zero magnitude");
  return std::acos(std::clamp(predicted.dot(designed.vec()) / n, -1.0, 1.0));
}

/// Component of `b` perpendicular to `direction`.
inline FieldVector transverse_field(const FieldVector& b, const UnitVector& direction) {
  return b - b.dot(direction.vec()) * direction.vec();
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationSample {
  double alpha_y = 0.0;  // commanded, rad
  double alpha_z = 0.0;  // commanded, rad
  int mass_index = 0;
  FieldVector field = FieldVector::Zero();  // measured, T
};

/// Arc geometry: the magnet face stays `surface_gap` from the sample; one
/// MagnetSpec per mass configuration.
struct CalibrationGeometry {
  Vec3 sample = Vec3::Zero();
  double surface_gap = 0.02;
  std::vector<MagnetSpec> magnets;
};

/// `count` configurations of 1, 2, ... stacked copies of `unit` (length grows).
inline std::vector<MagnetSpec> stacked_magnets(const MagnetSpec& unit, int count) {
  std::vector<MagnetSpec> out;
  for (int k = 1; k <= count; ++k) {
    MagnetSpec s = unit;
    s.length = unit.length * k;
    out.push_back(s);
  }
  return out;
}

inline Pose calibration_pose(const CalibrationGeometry& g, double alpha_y, double alpha_z, int mass_index) {
  const auto& m = g.magnets.at(static_cast<std::size_t>(mass_index));
  return magnet_pose_for_field_direction(g.sample, alpha_y, alpha_z, g.surface_gap + 0.5 * m.length);
}

inline FieldVector calibration_model(const CalibrationGeometry& g, double alpha_y, double alpha_z, int mass_index) {
  return cylinder_field(g.magnets.at(static_cast<std::size_t>(mass_index)),
                        calibration_pose(g, alpha_y, alpha_z, mass_index), g.sample);
}

struct CalibrationResult {
  double delta_alpha_y = 0.0;               // rad, shared
  std::vector<double> delta_alpha_z;        // rad, per mass configuration
  double residual_rms = 0.0;                // T, per field component
  std::vector<double> sigma_delta_alpha_z;  // rad
  double sigma_delta_alpha_y = 0.0;         // rad
};

/// Fit a shared alpha_y offset and per-mass alpha_z offsets so that the
/// model at (commanded + offsets) matches the measured fields.
inline CalibrationResult calibrate_offsets(const std::vector<CalibrationSample>& data, const CalibrationGeometry& g) {
  const int masses = static_cast<int>(g.magnets.size());
  if (masses == 0) throw Error(ErrorKind::InvalidArgument, "calibration geometry has no magnet configurations");
  std::vector<int> per_mass(static_cast<std::size_t>(masses), 0);
  for (const auto& s : data) {
    if (s.mass_index < 0 || s.mass_index >= masses)
      throw Error(ErrorKind::InvalidArgument, "mass index " + std::to_string(s.mass_index) + " has no magnet spec");
    ++per_mass[static_cast<std::size_t>(s.mass_index)];
  }
  for (int k = 0; k < masses; ++k) {
    if (per_mass[static_cast<std::size_t>(k)] < 4)
      throw Error(ErrorKind::InsufficientData, "mass configuration " + std::to_string(k) + " has fewer than 4 samples");
  }

  const int nres = 3 * static_cast<int>(data.size());
  const ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(nres);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& s = data[i];
      const FieldVector b = calibration_model(g, s.alpha_y + x[0], s.alpha_z + x[1 + s.mass_index], s.mass_index);
      r.segment<3>(3 * static_cast<long>(i)) = T2mT(1.0) * (b - s.field);
    }
  };
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1 + masses);
  const auto res = least_squares(fn, x0, nres);
  if (!res.converged && !(res.cost < 1e-20)) throw Error(ErrorKind::FitDiverged, "calibration fit did not converge");
  if (!res.params.allFinite()) throw Error(ErrorKind::FitDiverged, "calibration fit produced non-finite offsets");

  CalibrationResult out;
  out.delta_alpha_y = normalize_angle(res.params[0]);
  out.residual_rms = mT2T(res.rms());
  const Eigen::MatrixXd cov = res.covariance();
  if (cov.size()) out.sigma_delta_alpha_y = std::sqrt(std::max(0.0, cov(0, 0)));
  for (int k = 0; k < masses; ++k) {
    out.delta_alpha_z.push_back(normalize_angle(res.params[1 + k]));
    out.sigma_delta_alpha_z.push_back(cov.size() ? std::sqrt(std::max(0.0, cov(1 + k, 1 + k))) : 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Amplitude scheduling

struct AmplitudeOptions {
  double min_standoff = 0.04;  // m, magnet centre to sample
  double max_standoff = 0.5;   // m
  double resolution = 5e-4;    // m, robot linear resolution
};

struct AmplitudeSchedule {
  std::vector<double> targets;       // T
  std::vector<double> distances;     // m, on the resolution grid
  std::vector<double> achieved;      // T
  std::vector<double> errors;        // T, achieved - target
  std::vector<double> error_bounds;  // T, |dB/dr| * resolution / 2 at the chosen distance
};

/// |B| at the sample with the magnet `r` metres back along -direction, axis along direction.
inline double field_magnitude_at(const MagnetSpec& spec, const Vec3& sample, const UnitVector& direction, double r) {
  const Pose pose(sample - r * direction.vec(), 0.0, 0.0, 0.0);
  return cylinder_field(spec, pose_with_axis(pose.position, direction), sample).norm();
}

inline AmplitudeSchedule amplitude_schedule(const std::vector<double>& targets, const MagnetSpec& spec,
                                            const UnitVector& direction, const Vec3& sample,
                                            const AmplitudeOptions& opt = {}) {
  if (!(opt.resolution > 0.0)) throw Error(ErrorKind::InvalidArgument, "resolution must be > 0");
  if (!(opt.min_standoff > 0.5 * spec.length && opt.max_standoff > opt.min_standoff))
    throw Error(ErrorKind::InvalidArgument, "standoff interval must clear the magnet and be non-empty");
  auto field = [&](double r) { return field_magnitude_at(spec, sample, direction, r); };
  const double b_near = field(opt.min_standoff), b_far = field(opt.max_standoff);
  // grid-aligned interval limits
  const double grid_lo = std::ceil(opt.min_standoff / opt.resolution - 1e-9) * opt.resolution;
  const double grid_hi = std::floor(opt.max_standoff / opt.resolution + 1e-9) * opt.resolution;

  AmplitudeSchedule s;
  for (double t : targets) {
    if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "target magnitudes must be positive");
    if (!(t <= b_near)) throw Error(ErrorKind::TargetUnreachable, "target above the field at minimum standoff");
    if (!(t >= b_far)) throw Error(ErrorKind::TargetUnreachable, "target below the field at maximum standoff");
    double lo = opt.min_standoff, hi = opt.max_standoff;  // field(lo) >= t >= field(hi)
    while (hi - lo > 1e-9) {
      const double mid = 0.5 * (lo + hi);
      (field(mid) >= t ? lo : hi) = mid;
    }
    const double r = 0.5 * (lo + hi);
    const double rq = std::clamp(std::round(r / opt.resolution) * opt.resolution, grid_lo, grid_hi);
    const double achieved = field(rq);
    const double h = 1e-6;
    const double slope = (field(rq - h) - field(rq + h)) / (2 * h);
    s.targets.push_back(t);
    s.distances.push_back(rq);
    s.achieved.push_back(achieved);
    s.errors.push_back(achieved - t);
    s.error_bounds.push_back(std::abs(slope) * 0.5 * opt.resolution);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Similarity and pose replacement

/// Gaussian kernel S = exp(-|B2 - B1|^2 / (2 d^2)), norm in mT, d in mT.
inline double similarity(const FieldVector& b1, const FieldVector& b2, double d_mT = 3.0) {
  if (!(d_mT > 0.0)) throw Error(ErrorKind::InvalidArgument, "similarity length scale must be > 0");
  const double diff = T2mT((b2 - b1).norm());
  return std::exp(-diff * diff / (2.0 * d_mT * d_mT));
}

enum class DisplacementAxis { Y, Z };

struct ReplacementOptions {
  DisplacementAxis axis = DisplacementAxis::Z;
  double step = 5e-3;  // m
  int max_steps = 40;  // per direction; candidates are 0, +s, -s, +2s, -2s, ...
  /// Dipole approximation trusted when the displaced distance is at least this
  /// many outer diameters.
  double far_field_diameters = 8.0;
  double similarity_d_mT = 3.0;
  IkOptions ik = magnet_ik_options();
  JointConfig seed = JointConfig::Zero();
};

/// The four stages: (i) original forbidden pose, (ii) displaced, (iii) rotated
/// onto the inverse-dipole moment direction, (iv) moved along the sample ray to
/// restore |B|.
struct ReplacementPlan {
  Pose original_pose, displaced_pose, rotated_pose, final_pose;
  FieldVector target_field = FieldVector::Zero();
  FieldVector displaced_field = FieldVector::Zero();
  FieldVector rotated_field = FieldVector::Zero();
  FieldVector achieved_field = FieldVector::Zero();
  double similarity = 0.0;
  double displacement = 0.0;    // m along the chosen axis, signed
  double rotation_angle = 0.0;  // rad between original and rotated magnet axes
  bool far_field_violated = false;
  JointConfig final_joints = JointConfig::Zero();
  int candidates_tried = 0;
};

/// Magnet position on the ray from `sample` opposite `ray_dir` whose exact
/// field magnitude equals `target_norm`; starts from the 1/r^3 estimate.
inline double distance_for_magnitude(const MagnetSpec& spec, const Vec3& sample, const Vec3& ray_dir,
                                     const UnitVector& axis, double r_start, double b_start, double target_norm) {
  auto field_at = [&](double t) {
    const Pose p = pose_with_axis(sample - t * ray_dir, axis);
    return cylinder_field(spec, p, sample).norm();
  };
  // closest approach that keeps the sample outside the magnet
  const double t_min = std::hypot(0.5 * spec.length, spec.outer_radius) * 1.0001;
  const double guess = std::max(t_min, r_start * std::cbrt(b_start / target_norm));
  double lo = std::max(t_min, guess / 1.25), hi = guess * 1.25;
  for (int i = 0; i < 60 && field_at(hi) > target_norm; ++i) hi *= 1.5;
  for (int i = 0; i < 60 && lo > t_min && field_at(lo) < target_norm; ++i) lo = std::max(t_min, lo / 1.5);
  if (field_at(lo) < target_norm) return lo;  // target unattainable; closest allowed
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (field_at(mid) > target_norm ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline Vec3 axis_vector(DisplacementAxis a) { return a == DisplacementAxis::Y ? Vec3::UnitY() : Vec3::UnitZ(); }

inline ReplacementPlan replace_forbidden_pose(const Pose& forbidden, const Vec3& sample, const MagnetSpec& spec,
                                              const Environment& env, const DHTable& dh, const RobotBody& body,
                                              const ReplacementOptions& opt = {}) {
  if (!(opt.step > 0.0) || opt.max_steps < 0) throw Error(ErrorKind::InvalidArgument, "invalid displacement search");
  ReplacementPlan plan;
  plan.original_pose = forbidden;
  plan.target_field = cylinder_field(spec, forbidden, sample);
  const double target_norm = plan.target_field.norm();
  if (!(target_norm > 0.0)) throw Error(ErrorKind::ZeroField, "forbidden pose produces no field at the sample");
  const UnitVector target_dir = UnitVector::from(plan.target_field);
  const Vec3 axis = axis_vector(opt.axis);

  bool displaced_reachable = false;
  int tried = 0;
  for (int k = 0; k <= 2 * opt.max_steps; ++k) {
    const int mult = (k + 1) / 2 * (k % 2 == 1 ? 1 : -1);
    const double offset = mult * opt.step;
    ++tried;
    Pose displaced = forbidden;
    displaced.position += offset * axis;
    // step (iii) may turn the magnet any way, so keep the sample outside its bounding sphere
    if ((sample - displaced.position).norm() <= std::hypot(0.5 * spec.length, spec.outer_radius)) continue;
    const auto feas = evaluate_pose(displaced, dh, body, env, opt.seed, opt.ik);
    if (feas.status != FeasibilityStatus::Reachable) continue;
    displaced_reachable = true;

    // (iii) orient along the inverse-dipole moment for the displaced position
    const Vec3 r = sample - displaced.position;
    const DipoleMoment m = inverse_dipole(target_dir.vec(), r);
    const UnitVector m_hat = UnitVector::from(m);
    const Pose rotated = pose_with_axis(displaced.position, m_hat);
    const FieldVector b_rot = cylinder_field(spec, rotated, sample);

    // (iv) move along the sample ray to restore the magnitude
    const Vec3 ray = r.normalized();
    const double t = distance_for_magnitude(spec, sample, ray, m_hat, r.norm(), b_rot.norm(), target_norm);
    const Pose final_pose = pose_with_axis(sample - t * ray, m_hat);
    const auto final_feas = evaluate_pose(final_pose, dh, body, env, *feas.joints, opt.ik);
    if (final_feas.status != FeasibilityStatus::Reachable) continue;

    plan.displaced_pose = displaced;
    plan.displaced_field = cylinder_field(spec, displaced, sample);
    plan.rotated_pose = rotated;
    plan.rotated_field = b_rot;
    plan.final_pose = final_pose;
    plan.final_joints = *final_feas.joints;
    plan.achieved_field = cylinder_field(spec, final_pose, sample);
    plan.displacement = offset;
    plan.rotation_angle = std::acos(std::clamp(forbidden.x_axis().dot(m_hat.vec()), -1.0, 1.0));
    plan.far_field_violated = r.norm() < opt.far_field_diameters * 2.0 * spec.outer_radius;
    plan.similarity = similarity(plan.target_field, plan.achieved_field, opt.similarity_d_mT);
    plan.candidates_tried = tried;
    return plan;
  }
  if (!displaced_reachable)
    throw Error(ErrorKind::NoReachableDisplacement, "no reachable displacement within the search range");
  throw Error(ErrorKind::FinalPoseForbidden, "every reachable displacement led to a forbidden final pose");
}

// ---------------------------------------------------------------------------
// Taught poses

struct TaughtPose {
  JointConfig joints = JointConfig::Zero();
  FieldVector measured = FieldVector::Zero();  // T
};

struct TaughtPoseReport {
  Pose pose;
  FieldVector predicted = FieldVector::Zero();
  FieldVector measured = FieldVector::Zero();
  double angular_error = 0.0;  // rad, predicted vs measured direction
  double similarity = 0.0;
  CollisionResult collision;
};

/// Compare taught (joints, measured field) records against the model with the
/// magnet at the TCP.
inline std::vector<TaughtPoseReport> evaluate_taught_poses(const std::vector<TaughtPose>& taught, const DHTable& dh,
                                                           const MagnetSpec& spec, const Vec3& sample,
                                                           const RobotBody& body, const Environment& env) {
  std::vector<TaughtPoseReport> out;
  for (const auto& t : taught) {
    TaughtPoseReport r;
    r.pose = forward_kinematics(dh, t.joints);
    r.predicted = cylinder_field(spec, r.pose, sample);
    r.measured = t.measured;
    r.angular_error = t.measured.norm() > 0 ? angular_error(r.predicted, UnitVector::from(t.measured)) : 0.0;
    r.similarity = similarity(r.predicted, r.measured);
    r.collision = check_collision(body, dh, t.joints, env);
    out.push_back(r);
  }
  return out;
}

}  // namespace robomag
