#pragma once

// Pose algebra and forward/inverse kinematics of a 6R serial arm carrying a
// magnet tool.
//
// Orientation convention: a Pose stores extrinsic rotations about the fixed
// world axes, applied x first, then y, then z:
//
//     R = Rz(alpha_z) * Ry(alpha_y) * Rx(alpha_x)
//
// The tool frame's x-axis is the magnetisation axis of the magnet. With this
// convention R * e_x depends only on (alpha_y, alpha_z) and equals
// unit_normal(alpha_y, alpha_z).

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "robomag/core.hpp"

namespace robomag {

/// Wrap an angle into (-pi, pi]; -pi maps to +pi.
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

/// Direction with norm 1 (within 1e-12). Construct through `from`.
class UnitVector {
 public:
  static UnitVector from(const Vec3& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorKind::InvalidArgument, "cannot normalise a zero or non-finite vector");
    return UnitVector(v / n);
  }

  const Vec3& vec() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  UnitVector operator-() const { return UnitVector(-v_); }

 private:
  explicit UnitVector(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

/// World x-axis rotated by alpha_y about world y, then by alpha_z about world z.
inline UnitVector unit_normal(double alpha_y, double alpha_z) {
  return UnitVector::from(Vec3(std::cos(alpha_z) * std::cos(alpha_y), std::sin(alpha_z) * std::cos(alpha_y),
                               -std::sin(alpha_y)));
}

/// Position (m) and orientation (rad, extrinsic x-y-z) of a rigid body in the world frame.
struct Pose {
  Vec3 position = Vec3::Zero();
  double alpha_x = 0.0;
  double alpha_y = 0.0;
  double alpha_z = 0.0;

  Pose() = default;
  Pose(const Vec3& p, double ax, double ay, double az)
      : position(p), alpha_x(normalize_angle(ax)), alpha_y(normalize_angle(ay)), alpha_z(normalize_angle(az)) {}

  Mat3 rotation() const { return rot_z(alpha_z) * rot_y(alpha_y) * rot_x(alpha_x); }

  /// Tool x-axis in the world frame (the magnetisation axis for a magnet pose).
  Vec3 x_axis() const { return rotation().col(0); }

  Mat4 matrix() const {
    Mat4 t = Mat4::Identity();
    t.topLeftCorner<3, 3>() = rotation();
    t.topRightCorner<3, 1>() = position;
    return t;
  }

  static Pose from_rotation(const Vec3& p, const Mat3& r) {
    const double ay = std::atan2(-r(2, 0), std::hypot(r(0, 0), r(1, 0)));
    double ax = 0.0, az = 0.0;
    if (std::cos(ay) > 1e-9) {
      ax = std::atan2(r(2, 1), r(2, 2));
      az = std::atan2(r(1, 0), r(0, 0));
    } else {
      // gimbal lock: only alpha_z - alpha_x (or sum) is defined, keep alpha_x = 0
      az = std::atan2(-r(0, 1), r(1, 1));
    }
    return Pose(p, ax, ay, az);
  }

  static Pose from_matrix(const Mat4& t) { return from_rotation(t.topRightCorner<3, 1>(), t.topLeftCorner<3, 3>()); }

  bool operator==(const Pose&) const = default;
};

using JointConfig = Eigen::Matrix<double, 6, 1>;
using Jacobian = Eigen::Matrix<double, 6, 6>;

/// Standard D-H row: T = Rz(theta_offset + q) Tz(d) Tx(a) Rx(alpha).
struct DHRow {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
  double q_min = -kPi;
  double q_max = kPi;
};

/// Six D-H rows plus the magnet tool.
///
/// The end-effector frame is the last D-H frame rotated by -pi/2 about its y-axis,
/// so that its x-axis lies along the final joint axis (the flange normal). The
/// TCP is `tool_offset` metres along that x-axis.
struct DHTable {
  std::array<DHRow, 6> rows{};
  double tool_offset = 0.0;

  void validate() const {
    if (!(tool_offset >= 0.0)) throw Error(ErrorKind::InvalidArgument, "tool_offset must be >= 0");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!(rows[i].q_min <= rows[i].q_max))
        throw Error(ErrorKind::InvalidArgument, "joint " + std::to_string(i + 1) + ": q_min > q_max");
    }
  }

  /// Upper bound on the TCP distance from the base origin.
  double max_reach() const {
    double r = tool_offset;
    for (const auto& row : rows) r += std::hypot(row.a, row.d);
    return r;
  }
};

/// Nominal 6R table loosely sized after a small desktop arm (~0.5 m reach).
/// Not measured hardware values.
inline DHTable nominal_dh_table() {
  DHTable t;
  t.rows = {{
      {0.0, kPi / 2, 0.1715, 0.0, -2.949, 2.949},
      {0.221, 0.0, 0.0, kPi / 2, -1.83, 0.61},
      {0.0325, kPi / 2, 0.0, 0.0, -1.34, 1.57},
      {0.0, -kPi / 2, 0.235, 0.0, -2.089, 2.089},
      {0.0, kPi / 2, 0.0, 0.0, -1.919, 1.922},
      {0.0, 0.0, 0.0237, 0.0, -2.53, 2.53},
  }};
  t.tool_offset = 0.06;
  return t;
}

inline Mat4 dh_transform(const DHRow& row, double q) {
  const double th = row.theta_offset + q;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Mat4 t;
  t << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0, sa, ca, row.d,
       0, 0, 0, 1;
  return t;
}

inline Mat4 tool_transform(const DHTable& dh) {
  Mat4 t = Mat4::Identity();
  t.topLeftCorner<3, 3>() = rot_y(-kPi / 2);
  t.topRightCorner<3, 1>() = t.topLeftCorner<3, 3>() * Vec3(dh.tool_offset, 0, 0);
  return t;
}

inline bool within_limits(const DHTable& dh, const JointConfig& q, double tol = 1e-12) {
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(q[i]) || q[i] < dh.rows[i].q_min - tol || q[i] > dh.rows[i].q_max + tol) return false;
  }
  return true;
}

inline JointConfig clamp_to_limits(const DHTable& dh, JointConfig q) {
  for (int i = 0; i < 6; ++i) q[i] = std::clamp(q[i], dh.rows[i].q_min, dh.rows[i].q_max);
  return q;
}

inline void require_within_limits(const DHTable& dh, const JointConfig& q) {
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(q[i]) || q[i] < dh.rows[i].q_min - 1e-12 || q[i] > dh.rows[i].q_max + 1e-12)
      throw Error(ErrorKind::JointLimit, "joint " + std::to_string(i + 1) + " = " + std::to_string(q[i]) +
                                             " outside [" + std::to_string(dh.rows[i].q_min) + ", " +
                                             std::to_string(dh.rows[i].q_max) + "]");
  }
}

/// World transforms of D-H frames 0..6 followed by the TCP (index 7).
/// No limit check; callers validate.
inline std::array<Mat4, 8> frame_chain(const DHTable& dh, const JointConfig& q) {
  std::array<Mat4, 8> f;
  f[0] = Mat4::Identity();
  for (int i = 0; i < 6; ++i) f[i + 1] = f[i] * dh_transform(dh.rows[i], q[i]);
  f[7] = f[6] * tool_transform(dh);
  return f;
}

inline Mat4 forward_transform(const DHTable& dh, const JointConfig& q) { return frame_chain(dh, q)[7]; }

inline Pose forward_kinematics(const DHTable& dh, const JointConfig& joints) {
  require_within_limits(dh, joints);
  return Pose::from_matrix(forward_transform(dh, joints));
}

/// Geometric Jacobian of the TCP: rows 0-2 linear velocity, rows 3-5 angular velocity.
inline Jacobian geometric_jacobian(const DHTable& dh, const JointConfig& q) {
  const auto f = frame_chain(dh, q);
  const Vec3 p = f[7].topRightCorner<3, 1>();
  Jacobian j;
  for (int i = 0; i < 6; ++i) {
    const Vec3 z = f[i].block<3, 1>(0, 2);
    const Vec3 o = f[i].topRightCorner<3, 1>();
    j.block<3, 1>(0, i) = z.cross(p - o);
    j.block<3, 1>(3, i) = z;
  }
  return j;
}

struct IkOptions {
  double damping = 0.01;
  int max_iterations = 500;
  double position_tolerance = 1e-4;     // m
  double orientation_tolerance = 1e-3;  // rad
  /// Constrain only the tool x-axis direction, leaving roll about it free.
  bool free_tool_roll = false;
  /// Largest per-joint change in one iteration, rad.
  double max_step = 0.3;
  /// Additional deterministic seeds tried when the caller's seed fails.
  int restarts = 32;
};

struct PoseError {
  double position = 0.0;  // m
  double angle = 0.0;     // rad
};

namespace detail {

inline Vec3 rotation_error(const Mat3& current, const Mat3& target, bool free_roll) {
  if (!free_roll) {
    const Eigen::AngleAxisd aa(Mat3(target * current.transpose()));
    return aa.angle() * aa.axis();
  }
  const Vec3 x = current.col(0), xt = target.col(0);
  const Vec3 c = x.cross(xt);
  const double s = c.norm();
  const double ang = std::atan2(s, x.dot(xt));
  if (s > 1e-15) return c / s * ang;
  if (x.dot(xt) > 0) return Vec3::Zero();
  // antiparallel: pick any axis perpendicular to x
  Vec3 perp = x.unitOrthogonal();
  return perp * kPi;
}

// Deterministic seeds spread over the joint box; identical for every call.
inline std::vector<JointConfig> restart_seeds(const DHTable& dh, int count) {
  std::vector<JointConfig> seeds;
  std::mt19937_64 rng(0x5eed5eedULL);
  for (int k = 0; k < count; ++k) {
    JointConfig q;
    for (int i = 0; i < 6; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const double lo = dh.rows[i].q_min, hi = dh.rows[i].q_max;
      q[i] = lo + (0.1 + 0.8 * u) * (hi - lo);
    }
    seeds.push_back(q);
  }
  return seeds;
}

inline std::optional<JointConfig> dls_solve(const DHTable& dh, const Pose& target, JointConfig q,
                                            const IkOptions& opt) {
  const Mat3 rt = target.rotation();
  const double lambda2 = opt.damping * opt.damping;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const auto f = frame_chain(dh, q);
    const Mat3 r = f[7].topLeftCorner<3, 3>();
    const Vec3 p = f[7].topRightCorner<3, 1>();
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = target.position - p;
    e.tail<3>() = rotation_error(r, rt, opt.free_tool_roll);
    if (e.head<3>().norm() < 1e-10 && e.tail<3>().norm() < 1e-10) break;

    Jacobian j = geometric_jacobian(dh, q);
    if (opt.free_tool_roll) {
      const Vec3 x = r.col(0);
      const Mat3 proj = Mat3::Identity() - x * x.transpose();
      j.bottomRows<3>() = proj * j.bottomRows<3>();
    }
    const Jacobian a = j * j.transpose() + lambda2 * Jacobian::Identity();
    JointConfig dq = j.transpose() * a.ldlt().solve(e);
    const double m = dq.cwiseAbs().maxCoeff();
    if (m > opt.max_step) dq *= opt.max_step / m;
    q = clamp_to_limits(dh, q + dq);
  }
  const auto f = frame_chain(dh, q);
  const double ep = (target.position - f[7].topRightCorner<3, 1>()).norm();
  const double eo = rotation_error(f[7].topLeftCorner<3, 3>(), rt, opt.free_tool_roll).norm();
  if (ep <= opt.position_tolerance && eo <= opt.orientation_tolerance) return q;
  return std::nullopt;
}

}  // namespace detail

/// Position and orientation distance between the TCP at `q` and `target`.
inline PoseError pose_error(const DHTable& dh, const JointConfig& q, const Pose& target, bool free_tool_roll = false) {
  const Mat4 t = forward_transform(dh, q);
  return {(target.position - t.topRightCorner<3, 1>()).norm(),
          detail::rotation_error(t.topLeftCorner<3, 3>(), target.rotation(), free_tool_roll).norm()};
}

/// Damped least-squares IK with joint-limit clamping. Throws NoSolution.
inline JointConfig inverse_kinematics(const DHTable& dh, const Pose& target, const JointConfig& seed,
                                      const IkOptions& opt = {}) {
  require_within_limits(dh, seed);
  if (target.position.norm() > dh.max_reach())
    throw Error(ErrorKind::NoSolution, "target outside the workspace bound");
  if (auto q = detail::dls_solve(dh, target, seed, opt)) return *q;
  for (const auto& s : detail::restart_seeds(dh, opt.restarts)) {
    if (auto q = detail::dls_solve(dh, target, s, opt)) return *q;
  }
  throw Error(ErrorKind::NoSolution, "IK did not converge within the iteration budget");
}

/// Magnet-centre pose placing the magnet `standoff` metres behind `sample`
/// along -n(alpha_y, alpha_z), magnetisation axis along +n.
inline Pose magnet_pose_for_field_direction(const Vec3& sample, double alpha_y, double alpha_z, double standoff) {
  if (!(standoff > 0.0)) throw Error(ErrorKind::InvalidArgument, "standoff must be > 0");
  const Vec3 n = unit_normal(alpha_y, alpha_z).vec();
  return Pose(sample - standoff * n, 0.0, alpha_y, alpha_z);
}

/// Pose whose x-axis points along `axis` (alpha_x = 0).
inline Pose pose_with_axis(const Vec3& position, const UnitVector& axis) {
  const Vec3 n = axis.vec();
  const double ay = std::atan2(-n.z(), std::hypot(n.x(), n.y()));
  const double az = std::hypot(n.x(), n.y()) > 1e-15 ? std::atan2(n.y(), n.x()) : 0.0;
  return Pose(position, 0.0, ay, az);
}

/// Snap a position to the robot's linear resolution grid (default 0.5 mm).
inline Vec3 quantize_position(const Vec3& p, double resolution = 5e-4) {
  if (!(resolution > 0.0)) return p;
  return (p / resolution).array().round().matrix() * resolution;
}

}  // namespace robomag
