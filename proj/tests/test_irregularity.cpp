#include <doctest.h>

#include <cmath>

#include "vtlab/irregularity.hpp"
#include "vtlab/psd.hpp"

using namespace vtlab;

namespace {

PsdModel flat_psd(double level, double lmin = 2.0, double lmax = 20.0) {
  PsdModel psd;
  psd.omega = {1e-3, 50.0};
  psd.density = {level, level};
  psd.wavelength_min = lmin;
  psd.wavelength_max = lmax;
  return psd;
}

PsdModel rational_psd() {
  // smooth decaying spectrum over a 2-40 m band
  PsdModel psd;
  for (int i = 0; i <= 60; ++i) {
    double w = 0.05 * std::pow(10.0, 2.0 * i / 60.0);  // 0.05 .. 5 rad/m
    psd.omega.push_back(w);
    psd.density.push_back(1e-6 / ((w * w + 0.01) * (w * w + 0.5)));
  }
  psd.wavelength_min = 2.0;
  psd.wavelength_max = 40.0;
  return psd;
}

}  // namespace

TEST_SUITE("irregularity") {
  TEST_CASE("zero spectrum synthesizes the zero profile") {
    auto prof = synthesize(flat_psd(0.0), 200.0, 0.5, 42);
    for (double v : prof.values) CHECK(v == 0.0);
  }

  TEST_CASE("a single active bin is a pure cosine of amplitude 1") {
    // S * dW = 1/2 over exactly one bin: L = 100 m, dW = 2pi/100; choose the
    // band so only bin k=25 (lambda = 4 m) survives.
    double L = 100.0, dW = PsdModel::kTwoPi / L;
    PsdModel psd;
    psd.omega = {24.6 * dW, 25.4 * dW};
    psd.density = {0.5 / dW, 0.5 / dW};
    psd.wavelength_min = L / 25.4;
    psd.wavelength_max = L / 24.6;
    auto prof = synthesize(psd, L, 0.25, 7);
    double w0 = 25.0 * dW;
    // fit r(x) = cos(phi) cos(w0 x) - sin(phi) sin(w0 x) from two samples
    double c = prof.values[0];
    double s = (c * std::cos(w0 * 0.25) - prof.values[1]) / std::sin(w0 * 0.25);
    CHECK(std::sqrt(c * c + s * s) == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < prof.values.size(); i += 13) {
      double x = 0.25 * static_cast<double>(i);
      CHECK(prof.values[i] ==
            doctest::Approx(c * std::cos(w0 * x) - s * std::sin(w0 * x)).epsilon(1e-9).scale(1.0));
    }
  }

  TEST_CASE("sample variance matches the band integral of the spectrum") {
    auto psd = rational_psd();
    double target = psd.band_integral();
    // L >= 200 * lambda_max
    auto prof = synthesize(psd, 200.0 * 40.0, 0.5, 123);
    CHECK(prof.variance() == doctest::Approx(target).epsilon(0.05));
  }

  TEST_CASE("profiles are deterministic in the seed") {
    auto psd = rational_psd();
    auto a = synthesize(psd, 400.0, 0.5, 99);
    auto b = synthesize(psd, 400.0, 0.5, 99);
    auto c = synthesize(psd, 400.0, 0.5, 100);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
      diff = std::max(diff, std::abs(a.values[i] - c.values[i]));
    CHECK(diff > 0.0);
  }

  TEST_CASE("zero mean and stationarity proxy") {
    auto psd = rational_psd();
    auto prof = synthesize(psd, 4000.0, 0.5, 5);
    double sigma = std::sqrt(prof.variance());
    std::size_t half = prof.values.size() / 2;
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) m1 += prof.values[i];
    for (std::size_t i = half; i < prof.values.size(); ++i) m2 += prof.values[i];
    m1 /= static_cast<double>(half);
    m2 /= static_cast<double>(prof.values.size() - half);
    // standard error of the mean over correlated samples, loose bound via
    // the number of correlation lengths (~lambda_max) in each half
    double se = sigma / std::sqrt(2000.0 / 40.0 / 2.0);
    CHECK(std::abs(prof.mean()) < 3.0 * se);
    CHECK(std::abs(m1 - prof.mean()) < 3.0 * se);
    CHECK(std::abs(m2 - prof.mean()) < 3.0 * se);
  }

  TEST_CASE("round trip: estimated spectrum tracks the target per third-octave band") {
    auto psd = rational_psd();
    auto prof = synthesize(psd, 8000.0, 0.25, 2024);
    auto est = estimate_psd(prof, 4096, 0.5);
    auto bands = third_octave_bands(psd.omega_min() * 1.1, psd.omega_max() * 0.9);
    REQUIRE(bands.size() >= 8);
    for (auto [lo, hi] : bands) {
      double target = 0.0, got = 0.0;
      int n = 200;
      for (int i = 0; i < n; ++i) {
        double w = lo + (hi - lo) * (i + 0.5) / n;
        target += psd(w);
        got += est(w);
      }
      CHECK(got / target > 0.8);
      CHECK(got / target < 1.25);
    }
  }

  TEST_CASE("pure cosine concentrates its spectral mass in one bin") {
    IrregularityProfile prof;
    prof.dx = 0.25;
    double A = 3e-3;
    std::size_t n = 16385;
    double w0 = PsdModel::kTwoPi / 8.0;  // 8 m wavelength
    prof.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      prof.values[i] = A * std::cos(w0 * prof.dx * static_cast<double>(i) + 0.3);
    auto est = estimate_psd(prof, 2048, 0.5);
    // integrate the estimate near the tone vs everywhere
    double near = 0.0, total = 0.0;
    for (std::size_t k = 0; k + 1 < est.omega.size(); ++k) {
      double dw = est.omega[k + 1] - est.omega[k];
      double mass = est.density[k] * dw;
      total += mass;
      if (std::abs(est.omega[k] - w0) < 0.05 * w0) near += mass;
    }
    CHECK(near == doctest::Approx(0.5 * A * A).epsilon(0.05));
    CHECK(near / total > 0.98);
  }

  TEST_CASE("white sequence estimates flat at sigma^2 / bandwidth") {
    // Monte-Carlo over 32 seeds.
    double dx = 0.5, sigma = 2e-3;
    double bandwidth = BeamModal::kPi / dx;  // one-sided, rad/m
    std::size_t n = 8192;
    double mean_level = 0.0;
    int seeds = 32;
    std::vector<double> band_means;
    for (int s = 0; s < seeds; ++s) {
      IrregularityProfile prof;
      prof.dx = dx;
      prof.values.resize(n);
      Rng rng(1000 + static_cast<std::uint64_t>(s));
      for (auto& v : prof.values) v = rng.normal(0.0, sigma);
      auto est = estimate_psd(prof, 512, 0.5);
      double lvl = 0.0;
      for (double d : est.density) lvl += d;
      lvl /= static_cast<double>(est.density.size());
      mean_level += lvl;
    }
    mean_level /= seeds;
    double expect = sigma * sigma / bandwidth;
    CHECK(mean_level == doctest::Approx(expect).epsilon(0.2));
  }

  TEST_CASE("transport under wheels") {
    SUBCASE("zero speed freezes every series") {
      auto psd = rational_psd();
      auto prof = synthesize(psd, 400.0, 0.5, 17);
      auto out = sample_under_wheels(prof, 0.0, {10.0, 20.0, 30.0, 40.0}, 1e-3, 100);
      for (int j = 0; j < 4; ++j)
        for (long s = 0; s < 100; ++s) CHECK(out(j, s) == out(j, 0));
    }
    SUBCASE("offset wheels are delayed reads of one profile") {
      auto psd = rational_psd();
      auto prof = synthesize(psd, 400.0, 0.5, 18);
      double v = 10.0, dt = 1e-2, d = 2.0;  // delay = d/v = 0.2 s = 20 steps
      auto out = sample_under_wheels(prof, v, {50.0, 50.0 + d, 60.0, 70.0}, dt, 200);
      for (long s = 0; s + 20 < 200; ++s)
        CHECK(out(0, s + 20) == doctest::Approx(out(1, s)).epsilon(1e-12));
    }
    SUBCASE("sinusoid transports with small interpolation error") {
      double lambda = 6.4, dx = lambda / 64.0, v = 12.8;
      IrregularityProfile prof;
      prof.dx = dx;
      std::size_t n = 4001;
      prof.values.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        prof.values[i] = std::sin(PsdModel::kTwoPi * dx * static_cast<double>(i) / lambda);
      double dt = 1e-3;
      long samples = 1000;
      auto out = sample_under_wheels(prof, v, {3.0, 4.0, 5.0, 6.0}, dt, samples);
      double err = 0.0;
      for (long s = 0; s < samples; ++s) {
        double x = 3.0 + v * dt * static_cast<double>(s);
        err = std::max(err, std::abs(out(0, s) - std::sin(PsdModel::kTwoPi * x / lambda)));
      }
      CHECK(err < 1e-4);
    }
  }

  TEST_CASE("synthesis input validation") {
    auto psd = rational_psd();
    CHECK_THROWS_AS(synthesize(psd, 400.0, 1.0, 1), ValidationError);  // dx > lambda_min/4
    PsdModel narrow = psd;
    narrow.wavelength_min = 30.0;
    narrow.wavelength_max = 35.0;
    CHECK_THROWS_AS(synthesize(narrow, 20.0, 0.5, 1), ValidationError);  // band empty
    auto prof = synthesize(psd, 400.0, 0.5, 1);
    CHECK_THROWS_AS(sample_under_wheels(prof, 10.0, {395.0, 0, 0, 0}, 1e-2, 200),
                    ValidationError);  // window exceeds extent
    CHECK_THROWS_AS(estimate_psd(prof, 512, 1.0), ValidationError);
    CHECK_THROWS_AS(estimate_psd(prof, 4, 0.5), ValidationError);
  }

  TEST_CASE("psd file loading and unit conversion") {
    auto psd = load_psd(std::string(VTLAB_DATA_DIR) + "/track_psd.txt", 1.0, 120.0);
    CHECK(psd.omega.size() > 10);
    CHECK(psd(0.1) > 0.0);
    CHECK(psd.band_integral() > 0.0);
  }
}
