#pragma once

// Point-dipole field written component by component:
//   B_i = mu0/(4 pi) * (3 r_i (m . r) - m_i |r|^2) / |r|^5

#include <array>
#include <cmath>
#include <numbers>

namespace oracle {

inline std::array<double, 3> dipole_field(const std::array<double, 3>& m, const std::array<double, 3>& r) {
  const double mu0_4pi = 1e-7;
  const double r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double r5 = r2 * r2 * std::sqrt(r2);
  const double mdotr = m[0] * r[0] + m[1] * r[1] + m[2] * r[2];
  std::array<double, 3> b{};
  for (int i = 0; i < 3; ++i) b[i] = mu0_4pi * (3.0 * r[i] * mdotr - m[i] * r2) / r5;
  return b;
}

}  // namespace oracle
