#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace robomag {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Magnetic flux density in tesla, world frame unless stated otherwise.
using FieldVector = Vec3;
/// Magnetic dipole moment in A*m^2.
using DipoleMoment = Vec3;

inline constexpr double kPi = std::numbers::pi;
/// Vacuum permeability (pre-2019 SI exact value), T*m/A.
inline constexpr double kMu0 = 4.0e-7 * kPi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }
inline constexpr double mT2T(double mt) { return mt * 1e-3; }
inline constexpr double T2mT(double t) { return t * 1e3; }

enum class ErrorKind {
  InvalidArgument,
  JointLimit,
  NoSolution,
  ZeroDistance,
  ObserverInsideMaterial,
  ParseError,
  DegenerateGeometry,
  EndpointInCollision,
  ZeroField,
  InsufficientData,
  FitDiverged,
  TargetUnreachable,
  NoReachableDisplacement,
  FinalPoseForbidden,
  StateMixingTooStrong,
  ComplexRoots,
  NoConsistentField,
  ZeroMagnitude,
  DegenerateFit,
  ConfigError,
};

inline constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::JointLimit: return "JointLimit";
    case ErrorKind::NoSolution: return "NoSolution";
    case ErrorKind::ZeroDistance: return "ZeroDistance";
    case ErrorKind::ObserverInsideMaterial: return "ObserverInsideMaterial";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::EndpointInCollision: return "EndpointInCollision";
    case ErrorKind::ZeroField: return "ZeroField";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::FitDiverged: return "FitDiverged";
    case ErrorKind::TargetUnreachable: return "TargetUnreachable";
    case ErrorKind::NoReachableDisplacement: return "NoReachableDisplacement";
    case ErrorKind::FinalPoseForbidden: return "FinalPoseForbidden";
    case ErrorKind::StateMixingTooStrong: return "StateMixingTooStrong";
    case ErrorKind::ComplexRoots: return "ComplexRoots";
    case ErrorKind::NoConsistentField: return "NoConsistentField";
    case ErrorKind::ZeroMagnitude: return "ZeroMagnitude";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` distinguishes failure modes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace robomag
