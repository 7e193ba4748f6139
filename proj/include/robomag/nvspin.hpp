#pragma once

// NV-centre ground-state spin physics: the spin-1 Hamiltonian with strain term,
// ODMR resonance frequencies, the characteristic cubic of the energies, and
// NV-axis orientation fitting from normalised splittings.
//
// All frequencies are in Hz; fields in tesla.

#include <algorithm>
#include <array>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "robomag/core.hpp"
#include "robomag/kinematics.hpp"
#include "robomag/least_squares.hpp"

namespace robomag {

/// Electron gyromagnetic ratio / 2 pi, Hz/T.
inline constexpr double kGammaE = 28.02495e9;

struct NVParams {
  double D = 2.8704e9;     // zero-field splitting, Hz
  double Pi = 1.8515e6;    // strain / charge term, Hz
  double gamma_e = kGammaE;
  double axis_alpha_y = 0.0;  // NV axis = unit_normal(axis_alpha_y, axis_alpha_z)
  double axis_alpha_z = 0.0;

  void validate() const {
    if (!(D > 0.0)) throw Error(ErrorKind::InvalidArgument, "D must be > 0");
    if (!(Pi >= 0.0)) throw Error(ErrorKind::InvalidArgument, "Pi must be >= 0");
    if (!(gamma_e > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma_e must be > 0");
  }
};

using SpinMatrix = Eigen::Matrix3cd;

/// Spin-1 operators in the |+1>, |0>, |-1> basis.
struct SpinOperators {
  SpinMatrix x, y, z;
};

inline SpinOperators spin_one() {
  using C = std::complex<double>;
  const double s = 1.0 / std::sqrt(2.0);
  const C i(0.0, 1.0);
  SpinOperators ops;
  ops.x << 0, s, 0, s, 0, s, 0, s, 0;
  ops.y << 0, -i * s, 0, i * s, 0, -i * s, 0, i * s, 0;
  ops.z << 1, 0, 0, 0, 0, 0, 0, 0, -1;
  return ops;
}

/// H = D Sz^2 + Pi (Sx^2 - Sy^2) + gamma (Bx Sx + By Sy) + gamma Bz Sz, B in the NV frame.
inline SpinMatrix hamiltonian(const NVParams& p, const FieldVector& b_nv) {
  const auto s = spin_one();
  return p.D * s.z * s.z + p.Pi * (s.x * s.x - s.y * s.y) +
         p.gamma_e * (b_nv.x() * s.x + b_nv.y() * s.y + b_nv.z() * s.z);
}

struct ResonancePair {
  double f_minus = 0.0;
  double f_plus = 0.0;
  double splitting() const { return f_plus - f_minus; }
};

/// Transition frequencies from the ms=0-like state, identified by its overlap
/// with |0>. Throws StateMixingTooStrong when no eigenvector has overlap >= 0.5.
inline ResonancePair resonances(const NVParams& p, const FieldVector& b_nv) {
  const Eigen::SelfAdjointEigenSolver<SpinMatrix> es(hamiltonian(p, b_nv));
  const Eigen::Vector3d e = es.eigenvalues();
  int zero = 0;
  double best = -1.0;
  for (int k = 0; k < 3; ++k) {
    const double overlap = std::norm(es.eigenvectors()(1, k));
    if (overlap > best) {
      best = overlap;
      zero = k;
    }
  }
  if (best < 0.5) throw Error(ErrorKind::StateMixingTooStrong, "no eigenstate is predominantly ms=0");
  std::array<double, 2> f{};
  int n = 0;
  for (int k = 0; k < 3; ++k) {
    if (k != zero) f[static_cast<std::size_t>(n++)] = e[k] - e[zero];
  }
  std::sort(f.begin(), f.end());
  return {f[0], f[1]};
}

/// Roots (ascending) of
///   x^3 - (D^2/3 + Pi^2 + beta^2) x - (beta^2/2) D cos 2g - (D/6)(4 Pi^2 + beta^2) + 2 D^3 / 27 = 0
/// by the trigonometric method. beta = gamma_e |B| in Hz, g = field angle to the NV axis.
inline std::array<double, 3> characteristic_roots(double D, double Pi, double beta, double gamma_angle) {
  if (!(beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be >= 0");
  const double p = -(D * D / 3.0 + Pi * Pi + beta * beta);
  const double q = -0.5 * beta * beta * D * std::cos(2.0 * gamma_angle) - D / 6.0 * (4.0 * Pi * Pi + beta * beta) +
                   2.0 * D * D * D / 27.0;
  if (!(p < 0.0)) throw Error(ErrorKind::ComplexRoots, "degenerate cubic");
  const double m = 2.0 * std::sqrt(-p / 3.0);
  double arg = 3.0 * q / (p * m);
  if (std::abs(arg) > 1.0 + 1e-9) throw Error(ErrorKind::ComplexRoots, "cubic has complex roots; check parameters");
  arg = std::clamp(arg, -1.0, 1.0);
  const double phi = std::acos(arg) / 3.0;
  std::array<double, 3> r{m * std::cos(phi), m * std::cos(phi - 2.0 * kPi / 3.0), m * std::cos(phi - 4.0 * kPi / 3.0)};
  std::sort(r.begin(), r.end());
  return r;
}

/// Resonances predicted by the cubic: upper two roots minus the lowest.
inline ResonancePair cubic_resonances(double D, double Pi, double beta, double gamma_angle) {
  const auto r = characteristic_roots(D, Pi, beta, gamma_angle);
  return {r[1] - r[0], r[2] - r[0]};
}

struct FieldAngle {
  double B_magnitude = 0.0;  // T
  double theta = 0.0;        // rad, in [0, pi/2]
};

/// Invert a resonance pair to (|B|, theta) under the cubic model. Vieta's
/// relations give beta^2 and cos 2 theta in closed form; the result is checked
/// by a forward round trip (1 kHz).
inline FieldAngle polar_angle_from_resonances(double f_minus, double f_plus, double D, double Pi,
                                              double gamma_e = kGammaE, double b_max = 0.1) {
  if (!(f_plus >= f_minus) || !(f_minus > 0.0))
    throw Error(ErrorKind::InvalidArgument, "resonances must satisfy f_plus >= f_minus > 0");
  const double x1 = -(f_minus + f_plus) / 3.0;
  const double x2 = x1 + f_minus, x3 = x1 + f_plus;
  const double e2 = x1 * x2 + x1 * x3 + x2 * x3;
  const double e3 = x1 * x2 * x3;
  double beta2 = -e2 - D * D / 3.0 - Pi * Pi;
  const double scale = D * D;
  if (beta2 < -1e-9 * scale) throw Error(ErrorKind::NoConsistentField, "resonances imply negative |B|^2");
  beta2 = std::max(beta2, 0.0);
  const double beta = std::sqrt(beta2);
  if (beta / gamma_e > b_max) throw Error(ErrorKind::NoConsistentField, "implied |B| exceeds search bound");

  double theta = 0.0;
  if (beta > 1.0) {  // below 1 Hz the angle is not observable
    // constant term c = -e3 = -(b^2/2) D cos2g - (D/6)(4 Pi^2 + b^2) + 2 D^3/27
    const double cos2g = (e3 - D / 6.0 * (4.0 * Pi * Pi + beta2) + 2.0 * D * D * D / 27.0) * 2.0 / (beta2 * D);
    if (std::abs(cos2g) > 1.0 + 1e-6) throw Error(ErrorKind::NoConsistentField, "resonances imply |cos 2 theta| > 1");
    theta = 0.5 * std::acos(std::clamp(cos2g, -1.0, 1.0));
  }
  const auto check = cubic_resonances(D, Pi, beta, theta);
  if (std::abs(check.f_minus - f_minus) > 1e3 || std::abs(check.f_plus - f_plus) > 1e3)
    throw Error(ErrorKind::NoConsistentField, "no (|B|, theta) reproduces the resonances within 1 kHz");
  return {beta / gamma_e, theta};
}

/// nu_n(i) = nu(i) / |B(i)| * max |B|
inline std::vector<double> normalize_splittings(const std::vector<double>& splittings,
                                                const std::vector<double>& magnitudes) {
  if (splittings.size() != magnitudes.size())
    throw Error(ErrorKind::InvalidArgument, "splittings and magnitudes differ in length");
  double bmax = 0.0;
  for (double b : magnitudes) {
    if (!(std::abs(b) > 0.0)) throw Error(ErrorKind::ZeroMagnitude, "field magnitude must be non-zero");
    bmax = std::max(bmax, std::abs(b));
  }
  std::vector<double> out(splittings.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double b = std::abs(magnitudes[i]);
    out[i] = b == bmax ? splittings[i] : splittings[i] / b * bmax;
  }
  return out;
}

/// Angle between applied field and NV axis from pose angles:
///   g = arccos(|cos(az_B - az_NV) cos(ay_B - ay_NV)|)
inline double field_nv_angle(double ay_b, double az_b, double ay_nv, double az_nv) {
  return std::acos(std::min(1.0, std::abs(std::cos(az_b - az_nv) * std::cos(ay_b - ay_nv))));
}

struct TrajectoryPoint {
  double alpha_y_b = 0.0;  // rad
  double alpha_z_b = 0.0;  // rad
  double splitting = 0.0;  // normalised splitting, Hz
};

struct OrientationFit {
  double alpha_y_nv = 0.0;  // rad, representative in [0, pi)
  double alpha_z_nv = 0.0;  // rad, representative in [0, pi)
  double B_fit = 0.0;       // T, effective magnitude (not a physical field)
  double sigma_alpha_y = 0.0;
  double sigma_alpha_z = 0.0;
  double sigma_B = 0.0;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  double residual_rms = 0.0;  // Hz
  int starts = 0;
  std::string notes;
};

struct OrientationFitOptions {
  int grid = 12;  // multi-start grid per angle over [0, pi)
  /// Relative singular-value threshold for declaring the fit degenerate.
  double rank_tolerance = 1e-7;
};

inline double wrap_half_turn(double a) {
  double r = std::fmod(a, kPi);
  if (r < 0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}

/// Least-squares fit of (alpha_y_NV, alpha_z_NV, B) to normalised splittings.
inline OrientationFit fit_orientation(const std::vector<TrajectoryPoint>& traj, double D, double Pi,
                                      double gamma_e = kGammaE, const OrientationFitOptions& opt = {}) {
  if (traj.size() < 4) throw Error(ErrorKind::InsufficientData, "need at least 4 trajectory points");
  const int n = static_cast<int>(traj.size());
  double nu_max = 0.0;
  for (const auto& t : traj) nu_max = std::max(nu_max, t.splitting);
  const double hz_scale = 1e6;  // residuals in MHz keep the problem well scaled
  const double b_scale = 1e-3;  // B parameter in mT

  const ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(n);
    const double beta = gamma_e * std::abs(x[2]) * b_scale;
    for (int i = 0; i < n; ++i) {
      const auto& t = traj[static_cast<std::size_t>(i)];
      const double g = field_nv_angle(t.alpha_y_b, t.alpha_z_b, x[0], x[1]);
      r[i] = (cubic_resonances(D, Pi, beta, g).splitting() - t.splitting) / hz_scale;
    }
  };

  const double b0 = std::max(nu_max, 2.0 * Pi) / (2.0 * gamma_e) / b_scale;
  LsqResult best;
  best.cost = std::numeric_limits<double>::infinity();
  int starts = 0;
  for (int iy = 0; iy < opt.grid; ++iy) {
    for (int iz = 0; iz < opt.grid; ++iz) {
      Eigen::VectorXd x0(3);
      x0 << (iy + 0.5) * kPi / opt.grid, (iz + 0.5) * kPi / opt.grid, b0;
      auto res = least_squares(fn, x0, n);
      ++starts;
      if (std::isfinite(res.cost) && res.cost < best.cost) best = std::move(res);
    }
  }
  if (!std::isfinite(best.cost)) throw Error(ErrorKind::FitDiverged, "orientation fit produced no finite solution");

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(best.jacobian);
  const auto sv = svd.singularValues();
  if (sv.size() < 3 || !(sv[0] > 0.0) || sv[2] < opt.rank_tolerance * sv[0])
    throw Error(ErrorKind::DegenerateFit, "splittings carry no angular information (flat residual landscape)");

  OrientationFit out;
  out.alpha_y_nv = wrap_half_turn(best.params[0]);
  out.alpha_z_nv = wrap_half_turn(best.params[1]);
  out.B_fit = std::abs(best.params[2]) * b_scale;
  out.residual_rms = best.rms() * hz_scale;
  out.starts = starts;
  const Eigen::MatrixXd cov = best.covariance();
  if (cov.size() == 9) {
    Eigen::Matrix3d c = cov;
    // parameter 2 is in mT
    c.row(2) *= b_scale;
    c.col(2) *= b_scale;
    out.covariance = c;
    out.sigma_alpha_y = std::sqrt(std::max(0.0, c(0, 0)));
    out.sigma_alpha_z = std::sqrt(std::max(0.0, c(1, 1)));
    out.sigma_B = std::sqrt(std::max(0.0, c(2, 2)));
  }
  out.notes =
      "NV axis and its negation are indistinguishable; angles reported modulo 180 deg. "
      "A trajectory at constant alpha_y_B cannot separate alpha_y_NV from its mirror 2*alpha_y_B - alpha_y_NV.";
  return out;
}

/// Rotation whose rows are the NV-frame axes in world coordinates. The NV z-axis
/// is unit_normal(axis_alpha_y, axis_alpha_z); the NV x-axis is the world z-axis
/// projected onto the transverse plane (world x when the NV axis is vertical).
inline Mat3 nv_frame_basis(const NVParams& p) {
  const Vec3 z = unit_normal(p.axis_alpha_y, p.axis_alpha_z).vec();
  Vec3 x = Vec3::UnitZ() - z.z() * z;
  if (x.norm() < 1e-9) x = Vec3::UnitX() - z.x() * z;
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return r;
}

inline FieldVector world_to_nv_frame(const FieldVector& b_world, const NVParams& p) {
  return nv_frame_basis(p) * b_world;
}

}  // namespace robomag
