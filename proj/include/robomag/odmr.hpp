#pragma once

// Synthetic ODMR spectra (two Lorentzian dips) and resonance extraction by
// nonlinear least squares.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "robomag/least_squares.hpp"
#include "robomag/nvspin.hpp"

namespace robomag {

struct OdmrSpectrum {
  std::vector<double> frequencies;  // Hz, ascending
  std::vector<double> contrast;     // normalised photoluminescence, 1 off resonance
  double noise_sigma = 0.0;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Lorentzian of unit height and full width at half maximum `fwhm`.
inline double lorentzian(double f, double center, double fwhm) {
  const double u = 2.0 * (f - center) / fwhm;
  return 1.0 / (1.0 + u * u);
}

/// 1 - depth * (L(f; f-) + L(f; f+)), plus Gaussian noise when noise_sigma > 0.
inline OdmrSpectrum odmr_spectrum(const ResonancePair& res, double linewidth, double contrast_depth,
                                  const std::vector<double>& grid, double noise_sigma = 0.0, std::uint64_t seed = 0) {
  if (!(linewidth > 0.0)) throw Error(ErrorKind::InvalidArgument, "linewidth must be > 0");
  if (!(contrast_depth > 0.0 && contrast_depth < 1.0))
    throw Error(ErrorKind::InvalidArgument, "contrast depth must lie in (0, 1)");
  OdmrSpectrum s;
  s.frequencies = grid;
  s.noise_sigma = noise_sigma;
  s.contrast.resize(grid.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s.contrast[i] = 1.0 - contrast_depth * (lorentzian(grid[i], res.f_minus, linewidth) +
                                            lorentzian(grid[i], res.f_plus, linewidth));
    if (noise_sigma > 0.0) s.contrast[i] += noise(rng);
  }
  return s;
}

inline OdmrSpectrum odmr_spectrum(const NVParams& p, const FieldVector& b_nv, double linewidth, double contrast_depth,
                                  const std::vector<double>& grid, double noise_sigma = 0.0, std::uint64_t seed = 0) {
  return odmr_spectrum(resonances(p, b_nv), linewidth, contrast_depth, grid, noise_sigma, seed);
}

struct ResonanceFit {
  ResonancePair pair;
  double sigma_minus = 0.0;  // Hz
  double sigma_plus = 0.0;   // Hz
  double linewidth = 0.0;    // Hz, FWHM
  double depth_minus = 0.0;
  double depth_plus = 0.0;
  double baseline = 1.0;
  double residual_rms = 0.0;
  bool merged = false;  // one dip only; f_minus == f_plus
};

namespace detail {

inline std::vector<double> boxcar(const std::vector<double>& v, int half) {
  std::vector<double> out(v.size());
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i) {
    double s = 0;
    int c = 0;
    for (int j = std::max(0, i - half); j <= std::min(n - 1, i + half); ++j, ++c) s += v[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / c;
  }
  return out;
}

// Robust noise estimate from first differences (MAD).
inline double difference_noise(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  std::vector<double> d;
  for (std::size_t i = 1; i < v.size(); ++i) d.push_back(std::abs(v[i] - v[i - 1]));
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  return 1.4826 * d[d.size() / 2] / std::sqrt(2.0);
}

}  // namespace detail

/// Double-Lorentzian fit seeded from the two deepest local minima of the
/// smoothed spectrum. A single-dip spectrum is fitted with one Lorentzian and
/// flagged as merged.
inline ResonanceFit fit_resonances(const OdmrSpectrum& s) {
  const std::size_t n = s.frequencies.size();
  if (n < 8 || s.contrast.size() != n) throw Error(ErrorKind::InvalidArgument, "spectrum needs >= 8 matching samples");
  const double f0 = s.frequencies.front();
  const double df = (s.frequencies.back() - f0) / static_cast<double>(n - 1);
  const double mhz = 1e6;

  const double noise = detail::difference_noise(s.contrast);
  const auto sm = detail::boxcar(s.contrast, 2);
  double base = sm.front();
  {
    std::vector<double> sorted = sm;
    std::sort(sorted.begin(), sorted.end());
    base = sorted[sorted.size() * 3 / 4];  // off-resonance level
  }

  std::vector<std::size_t> minima;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (sm[i] <= sm[i - 1] && sm[i] < sm[i + 1]) minima.push_back(i);
  }
  if (minima.empty()) throw Error(ErrorKind::FitDiverged, "no dip found in spectrum");
  std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) { return sm[a] < sm[b]; });
  const std::size_t m1 = minima.front();
  const double depth1 = base - sm[m1];

  // half-width of the deepest dip from the half-depth crossing
  std::size_t lo = m1, hi = m1;
  while (lo > 0 && sm[lo] < base - 0.5 * depth1) --lo;
  while (hi + 1 < n && sm[hi] < base - 0.5 * depth1) ++hi;
  const double fwhm0 = std::max(2.0 * df, std::min(m1 - lo, hi - m1) * 2.0 * df);

  std::optional<std::size_t> m2;
  for (std::size_t k = 1; k < minima.size(); ++k) {
    const std::size_t c = minima[k];
    const double sep = std::abs(static_cast<double>(c) - static_cast<double>(m1)) * df;
    const double d = base - sm[c];
    if (sep > 0.5 * fwhm0 && d > 0.25 * depth1 && d > 4.0 * noise / std::sqrt(5.0)) {
      m2 = c;
      break;
    }
  }

  auto model = [](double f, const Eigen::VectorXd& x, bool two) {
    double v = x[0] - x[1] * lorentzian(f, x[2], x[3]);
    if (two) v -= x[4] * lorentzian(f, x[5], x[3]);
    return v;
  };

  const bool two = m2.has_value();
  // parameters: baseline, depth1, center1 (MHz from f0), fwhm (MHz), [depth2, center2]
  Eigen::VectorXd x0(two ? 6 : 4);
  x0[0] = base;
  x0[1] = depth1;
  x0[2] = (s.frequencies[m1] - f0) / mhz;
  x0[3] = fwhm0 / mhz;
  if (two) {
    x0[4] = base - sm[*m2];
    x0[5] = (s.frequencies[*m2] - f0) / mhz;
  }
  const int nres = static_cast<int>(n);
  const ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r.resize(nres);
    Eigen::VectorXd xs = x;
    xs[3] = std::abs(x[3]);
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<long>(i)] = model((s.frequencies[i] - f0) / mhz, xs, two) - s.contrast[i];
  };
  const auto res = least_squares(fn, x0, nres);
  if (!std::isfinite(res.cost) || !res.params.allFinite()) throw Error(ErrorKind::FitDiverged, "resonance fit diverged");

  ResonanceFit out;
  const Eigen::MatrixXd cov = res.covariance();
  auto sigma = [&](int k) { return cov.size() ? std::sqrt(std::max(0.0, cov(k, k))) * mhz : 0.0; };
  out.baseline = res.params[0];
  out.linewidth = std::abs(res.params[3]) * mhz;
  out.residual_rms = res.rms();
  const double c1 = f0 + res.params[2] * mhz;
  if (!two) {
    out.merged = true;
    out.pair = {c1, c1};
    out.depth_minus = out.depth_plus = res.params[1];
    out.sigma_minus = out.sigma_plus = sigma(2);
  } else {
    const double c2 = f0 + res.params[5] * mhz;
    const bool first_low = c1 <= c2;
    out.pair = {std::min(c1, c2), std::max(c1, c2)};
    out.depth_minus = first_low ? res.params[1] : res.params[4];
    out.depth_plus = first_low ? res.params[4] : res.params[1];
    out.sigma_minus = first_low ? sigma(2) : sigma(5);
    out.sigma_plus = first_low ? sigma(5) : sigma(2);
  }
  if (out.pair.f_minus < s.frequencies.front() || out.pair.f_plus > s.frequencies.back())
    throw Error(ErrorKind::FitDiverged, "fitted resonance outside the sweep");
  return out;
}

}  // namespace robomag
