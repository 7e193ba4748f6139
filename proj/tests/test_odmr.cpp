#include <cmath>

#include <gtest/gtest.h>

#include "robomag/csv.hpp"
#include "robomag/odmr.hpp"

using namespace robomag;

namespace {

const std::string kData = ROBOMAG_DATA_DIR;

std::vector<double> sweep(double lo_mhz, double hi_mhz, std::size_t n) { return linspace(lo_mhz * 1e6, hi_mhz * 1e6, n); }

}  // namespace

TEST(OdmrSpectrum, DipDepthAtResonance) {
  const ResonancePair r{2.80e9, 2.94e9};
  auto grid = sweep(2750, 3000, 2001);
  grid.push_back(r.f_minus);
  std::sort(grid.begin(), grid.end());
  const auto s = odmr_spectrum(r, 1e6, 0.02, grid);
  ASSERT_EQ(s.frequencies.size(), s.contrast.size());
  const auto it = std::find(s.frequencies.begin(), s.frequencies.end(), r.f_minus);
  const double c = s.contrast[static_cast<std::size_t>(it - s.frequencies.begin())];
  EXPECT_NEAR(c, 1.0 - 0.02, 1e-6);
  for (double v : s.contrast) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, 1.0 - 0.02 * 1.001);
  }
}

TEST(OdmrSpectrum, MinimaAtResonances) {
  NVParams p;
  const Vec3 b(1e-3, 0.5e-3, 2e-3);
  const auto r = resonances(p, b);
  const auto grid = sweep(2720, 3020, 2001);
  const double df = grid[1] - grid[0];
  const auto s = odmr_spectrum(p, b, 1e6, 0.02, grid);
  const std::size_t mid = static_cast<std::size_t>(
      std::lower_bound(grid.begin(), grid.end(), 0.5 * (r.f_minus + r.f_plus)) - grid.begin());
  const auto lo = std::min_element(s.contrast.begin(), s.contrast.begin() + static_cast<long>(mid));
  const auto hi = std::min_element(s.contrast.begin() + static_cast<long>(mid), s.contrast.end());
  EXPECT_LE(std::abs(grid[static_cast<std::size_t>(lo - s.contrast.begin())] - r.f_minus), df);
  EXPECT_LE(std::abs(grid[static_cast<std::size_t>(hi - s.contrast.begin())] - r.f_plus), df);
}

TEST(OdmrSpectrum, InvalidParameters) {
  const ResonancePair r{2.8e9, 2.9e9};
  const auto grid = sweep(2700, 3000, 100);
  EXPECT_THROW(odmr_spectrum(r, 0.0, 0.02, grid), Error);
  EXPECT_THROW(odmr_spectrum(r, 1e6, 0.0, grid), Error);
  EXPECT_THROW(odmr_spectrum(r, 1e6, 1.0, grid), Error);
}

TEST(OdmrSpectrum, SeededNoiseIsReproducible) {
  const ResonancePair r{2.8e9, 2.9e9};
  const auto grid = sweep(2700, 3000, 500);
  const auto a = odmr_spectrum(r, 1e6, 0.02, grid, 0.002, 9);
  const auto b = odmr_spectrum(r, 1e6, 0.02, grid, 0.002, 9);
  const auto c = odmr_spectrum(r, 1e6, 0.02, grid, 0.002, 10);
  EXPECT_EQ(a.contrast, b.contrast);
  EXPECT_NE(a.contrast, c.contrast);
}

TEST(FitResonances, NoiseFreeRoundTrip) {
  NVParams p;
  for (const Vec3& b : {Vec3(1e-3, 0.5e-3, 2e-3), Vec3(0, 0, 1e-3), Vec3(3e-3, -1e-3, 0.5e-3)}) {
    const auto r = resonances(p, b);
    const auto grid = sweep(2720, 3020, 2001);
    const double df = grid[1] - grid[0];
    const auto fit = fit_resonances(odmr_spectrum(p, b, 1e6, 0.02, grid));
    EXPECT_FALSE(fit.merged);
    EXPECT_LT(std::abs(fit.pair.f_minus - r.f_minus), df / 10);
    EXPECT_LT(std::abs(fit.pair.f_plus - r.f_plus), df / 10);
    EXPECT_NEAR(fit.linewidth, 1e6, 1e3);
  }
}

TEST(FitResonances, NoisyWithinThreeSigma) {
  NVParams p;
  const Vec3 b(1e-3, 0.5e-3, 2e-3);
  const auto r = resonances(p, b);
  const auto grid = sweep(2720, 3020, 2001);
  int inside = 0;
  const int draws = 100;
  for (int k = 0; k < draws; ++k) {
    const auto fit = fit_resonances(odmr_spectrum(p, b, 1e6, 0.02, grid, 0.002, 1000 + k));
    ASSERT_FALSE(fit.merged);
    EXPECT_GT(fit.sigma_minus, 0.0);
    if (std::abs(fit.pair.f_minus - r.f_minus) <= 3 * fit.sigma_minus &&
        std::abs(fit.pair.f_plus - r.f_plus) <= 3 * fit.sigma_plus)
      ++inside;
  }
  EXPECT_GE(inside, 95);
}

TEST(FitResonances, MergedDip) {
  NVParams p;
  p.Pi = 0.0;
  const auto grid = sweep(2850, 2890, 801);
  const auto fit = fit_resonances(odmr_spectrum(p, Vec3::Zero(), 1e6, 0.02, grid));
  EXPECT_TRUE(fit.merged);
  EXPECT_EQ(fit.pair.f_minus, fit.pair.f_plus);
  EXPECT_NEAR(fit.pair.f_minus, p.D, 5e3);
}

TEST(FitResonances, ZeroFieldStrainSplittingResolved) {
  NVParams p;  // Pi = 1.8515 MHz, dips 3.7 MHz apart
  const auto grid = sweep(2860, 2880, 2001);
  const auto fit = fit_resonances(odmr_spectrum(p, Vec3::Zero(), 0.5e6, 0.02, grid));
  EXPECT_FALSE(fit.merged);
  EXPECT_NEAR(fit.pair.splitting(), 3.7030e6, 1e3);
}

TEST(FitResonances, FlatSpectrumFails) {
  OdmrSpectrum s;
  s.frequencies = sweep(2700, 3000, 100);
  s.contrast.assign(100, 1.0);
  EXPECT_THROW(fit_resonances(s), Error);
  OdmrSpectrum tiny;
  tiny.frequencies = {1, 2, 3};
  tiny.contrast = {1, 0.9, 1};
  EXPECT_THROW(fit_resonances(tiny), Error);
}

TEST(FitResonances, FixtureSpectrum) {
  const auto t = load_csv(kData + "/spectra/two_dips.csv");
  double f_minus = 0, f_plus = 0;
  for (const auto& c : t.comments) {
    if (std::sscanf(c.c_str(), " f_minus_MHz %lf f_plus_MHz %lf", &f_minus, &f_plus) == 2) break;
  }
  ASSERT_GT(f_minus, 0.0);
  OdmrSpectrum s;
  for (const auto& r : t.rows) {
    s.frequencies.push_back(r[t.column("freq_MHz")] * 1e6);
    s.contrast.push_back(r[t.column("contrast")]);
  }
  const auto fit = fit_resonances(s);
  EXPECT_LE(std::abs(fit.pair.f_minus - f_minus * 1e6), 3 * fit.sigma_minus);
  EXPECT_LE(std::abs(fit.pair.f_plus - f_plus * 1e6), 3 * fit.sigma_plus);
}
