#pragma once

// Field models for an axially magnetised (hollow) cylinder and its dipole
// approximation, plus the closed-form inverse dipole problem.

#include <cmath>
#include <string>

#include "robomag/core.hpp"
#include "robomag/kinematics.hpp"

namespace robomag {

/// Axially magnetised hollow cylinder. Magnetisation points along the local
/// x-axis of the magnet pose; the pose position is the geometric centre.
struct MagnetSpec {
  double outer_radius = 0.0;   // m
  double inner_radius = 0.0;   // m, 0 for a solid cylinder
  double length = 0.0;         // m
  double magnetisation = 0.0;  // A/m

  static MagnetSpec from_remanence(double outer_radius, double inner_radius, double length, double remanence_T) {
    return {outer_radius, inner_radius, length, remanence_T / kMu0};
  }

  double remanence() const { return kMu0 * magnetisation; }
  double volume() const { return kPi * (outer_radius * outer_radius - inner_radius * inner_radius) * length; }

  void validate() const {
    if (!(inner_radius >= 0.0 && inner_radius < outer_radius))
      throw Error(ErrorKind::InvalidArgument, "magnet radii must satisfy 0 <= inner < outer");
    if (!(length > 0.0)) throw Error(ErrorKind::InvalidArgument, "magnet length must be > 0");
    if (!(magnetisation > 0.0)) throw Error(ErrorKind::InvalidArgument, "magnetisation must be > 0");
  }
};

/// Nominal N52-grade ring magnet, 25 mm diameter x 30 mm with a 5 mm bore.
/// About 10 mT on axis at 70 mm from the centre.
inline MagnetSpec nominal_magnet() { return MagnetSpec::from_remanence(0.0125, 0.0025, 0.03, 1.45); }

/// Point-dipole field at displacement r (dipole -> observer).
inline FieldVector dipole_field(const DipoleMoment& m, const Vec3& r) {
  const double d = r.norm();
  if (!(d > 0.0)) throw Error(ErrorKind::ZeroDistance, "observer coincides with dipole");
  const Vec3 rh = r / d;
  return kMu0 / (4.0 * kPi) * (3.0 * m.dot(rh) * rh - m) / (d * d * d);
}

/// Moment that produces field `b` at displacement r (dipole -> observer):
///   m = (6 pi / mu0)(B.r)|r| r - (4 pi / mu0)|r|^3 B
inline DipoleMoment inverse_dipole(const FieldVector& b, const Vec3& r) {
  const double d = r.norm();
  if (!(d > 0.0)) throw Error(ErrorKind::ZeroDistance, "observer coincides with dipole");
  return 6.0 * kPi / kMu0 * b.dot(r) * d * r - 4.0 * kPi / kMu0 * d * d * d * b;
}

/// Equivalent dipole moment magnitude, M times the solid volume.
inline double equivalent_dipole(const MagnetSpec& spec) { return spec.magnetisation * spec.volume(); }

inline DipoleMoment equivalent_dipole(const MagnetSpec& spec, const Pose& pose) {
  return equivalent_dipole(spec) * pose.x_axis();
}

/// Bulirsch's generalised complete elliptic integral
///   cel(kc, p, c, s) = int_0^{pi/2} (c cos^2 + s sin^2) / ((cos^2 + p sin^2) sqrt(cos^2 + kc^2 sin^2)) dphi
inline double bulirsch_cel(double kc, double p, double c, double s, double tol = 1e-12) {
  if (kc == 0.0) return std::nan("");
  double k = std::abs(kc);
  double em = 1.0;
  double pp = p, cc = c, ss = s;
  if (p > 0.0) {
    pp = std::sqrt(p);
    ss = s / pp;
  } else {
    double f = kc * kc;
    double q = 1.0 - f;
    const double g = 1.0 - pp;
    f -= pp;
    q *= (ss - c * pp);
    pp = std::sqrt(f / g);
    cc = (c - ss) / g;
    ss = -q / (g * g * pp) + cc * pp;
  }
  double f = cc;
  cc += ss / pp;
  double g = k / pp;
  ss = 2.0 * (ss + f * g);
  pp += g;
  g = em;
  em += k;
  double kk = k;
  for (int it = 0; it < 100 && std::abs(g - k) > g * tol; ++it) {
    k = 2.0 * std::sqrt(kk);
    kk = k * em;
    f = cc;
    cc += ss / pp;
    g = kk / pp;
    ss = 2.0 * (ss + f * g);
    pp += g;
    g = em;
    em += k;
  }
  return 0.5 * kPi * (ss + cc * em) / (em * (em + pp));
}

/// Field of a solid cylinder (radius a, length len, magnetisation m along +z)
/// centred at the origin, evaluated at cylindrical coordinates (rho, z).
/// Returns (B_rho, B_z) in tesla. Equivalent solenoid form with cel().
inline Eigen::Vector2d solid_cylinder_field_local(double a, double len, double m, double rho, double z) {
  const double b = 0.5 * len;
  const double b0 = kMu0 * m / kPi;
  const double zp = z + b, zm = z - b;
  const double ap = a + rho, am = a - rho;
  const double np = std::sqrt(zp * zp + ap * ap);
  const double nm = std::sqrt(zm * zm + ap * ap);
  const double alpha_p = a / np, alpha_m = a / nm;
  const double beta_p = zp / np, beta_m = zm / nm;
  const double gam = am / ap;
  const double kp = std::sqrt((zp * zp + am * am) / (zp * zp + ap * ap));
  const double km = std::sqrt((zm * zm + am * am) / (zm * zm + ap * ap));
  const double b_rho = b0 * (alpha_p * bulirsch_cel(kp, 1.0, 1.0, -1.0) - alpha_m * bulirsch_cel(km, 1.0, 1.0, -1.0));
  const double b_z = b0 * a / ap *
                     (beta_p * bulirsch_cel(kp, gam * gam, 1.0, gam) - beta_m * bulirsch_cel(km, gam * gam, 1.0, gam));
  return {b_rho, b_z};
}

/// Observer expressed in the magnet's local frame (axis = local x).
inline Vec3 to_magnet_frame(const Pose& magnet_pose, const Vec3& observer) {
  return magnet_pose.rotation().transpose() * (observer - magnet_pose.position);
}

/// True when `local` (magnet frame) lies in magnet material, 1e-9 m boundary tolerance.
/// Points in the bore are outside the material.
inline bool inside_material(const MagnetSpec& spec, const Vec3& local, double tol = 1e-9) {
  const double rho = std::hypot(local.y(), local.z());
  if (std::abs(local.x()) > 0.5 * spec.length + tol) return false;
  if (rho > spec.outer_radius + tol) return false;
  if (spec.inner_radius > 0.0 && rho < spec.inner_radius - tol) return false;
  return true;
}

/// Field in the magnet frame (axis = local x) at local position `local`.
inline FieldVector cylinder_field_local(const MagnetSpec& spec, const Vec3& local) {
  const double axial = local.x();
  const double rho = std::hypot(local.y(), local.z());
  Eigen::Vector2d f = solid_cylinder_field_local(spec.outer_radius, spec.length, spec.magnetisation, rho, axial);
  if (spec.inner_radius > 0.0)
    f -= solid_cylinder_field_local(spec.inner_radius, spec.length, spec.magnetisation, rho, axial);
  Vec3 out(f[1], 0.0, 0.0);
  if (rho > 0.0) {
    out.y() = f[0] * local.y() / rho;
    out.z() = f[0] * local.z() / rho;
  }
  return out;
}

/// World-frame field of the magnet at `magnet_pose`, observed at `observer`.
inline FieldVector cylinder_field(const MagnetSpec& spec, const Pose& magnet_pose, const Vec3& observer) {
  const Vec3 local = to_magnet_frame(magnet_pose, observer);
  if (inside_material(spec, local))
    throw Error(ErrorKind::ObserverInsideMaterial, "observer lies inside the magnet material");
  return magnet_pose.rotation() * cylinder_field_local(spec, local);
}

}  // namespace robomag
