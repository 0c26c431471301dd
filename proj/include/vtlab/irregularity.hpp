#pragma once

// Random rail irregularity profiles synthesized from a PSD by the spectral
// representation method, Welch re-estimation for the round-trip check, and
// evaluation under moving wheels via cubic (Catmull-Rom) interpolation.

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "vtlab/common.hpp"
#include "vtlab/fft.hpp"
#include "vtlab/integrate.hpp"
#include "vtlab/psd.hpp"

namespace vtlab {

struct IrregularityProfile {
  std::vector<double> values;  // r(x) on the uniform grid, m
  double dx = 0.0;             // m
  std::uint64_t seed = 0;
  std::string source_id;

  double length() const { return dx * static_cast<double>(values.size() - 1); }

  // Catmull-Rom interpolation on the uniform grid; end cells fall back to
  // linear. x must lie inside [0, length].
  double at(double x) const {
    require(x >= 0.0 && x <= length() + 1e-12, "sample outside profile extent");
    const auto n = static_cast<long>(values.size());
    double u = x / dx;
    long i = static_cast<long>(std::floor(u));
    if (i >= n - 1) i = n - 2;
    double f = u - static_cast<double>(i);
    if (i < 1 || i > n - 3) {
      return values[static_cast<std::size_t>(i)] * (1.0 - f) +
             values[static_cast<std::size_t>(i + 1)] * f;
    }
    double p0 = values[static_cast<std::size_t>(i - 1)];
    double p1 = values[static_cast<std::size_t>(i)];
    double p2 = values[static_cast<std::size_t>(i + 1)];
    double p3 = values[static_cast<std::size_t>(i + 2)];
    return p1 + 0.5 * f *
                    (p2 - p0 +
                     f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                          f * (3.0 * (p1 - p2) + p3 - p0)));
  }

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }

  double variance() const {
    double m = mean(), s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return s / static_cast<double>(values.size());
  }
};

// Spectral representation: r(x) = sum_k sqrt(2 S(w_k) dW) cos(w_k x + phi_k)
// with bins on the 2 pi / L grid restricted to the band and i.i.d. uniform
// phases from the seeded generator. Bin-aligned frequencies make the sum an
// inverse real FFT over one period of m = L/dx samples; the grid point at
// x = L repeats the one at 0.
inline IrregularityProfile synthesize(const PsdModel& psd, double track_length,
                                      double dx, std::uint64_t seed) {
  psd.validate();
  require(track_length > 0 && dx > 0, "bad track geometry");
  require(dx <= psd.wavelength_min / 4.0,
          "dx too coarse for the shortest wavelength");
  const double m_exact = track_length / dx;
  const long m = std::lround(m_exact);
  require(m >= 8 && std::abs(m_exact - static_cast<double>(m)) < 1e-9,
          "track length must be an integer multiple of dx");

  const double dw = PsdModel::kTwoPi / track_length;
  const long k_lo = static_cast<long>(std::ceil(psd.omega_min() / dw - 1e-9));
  const long k_hi = static_cast<long>(std::floor(psd.omega_max() / dw + 1e-9));
  require(k_hi >= k_lo && k_lo >= 1, "band empty after discretization");
  require(k_hi < m / 2, "band reaches the grid Nyquist; decrease dx");

  Rng rng(seed);
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(m) / 2 + 1,
                                             {0.0, 0.0});
  for (long k = k_lo; k <= k_hi; ++k) {
    double w = static_cast<double>(k) * dw;
    double amp = std::sqrt(2.0 * psd(w) * dw);
    double phi = rng.uniform(0.0, PsdModel::kTwoPi);
    // c2r with coefficient c_k contributes (2/m)*Re(c_k e^{2pi i jk/m}) per
    // sample after the 1/m scaling below, so c_k = (m/2) amp e^{i phi}.
    spectrum[static_cast<std::size_t>(k)] =
        0.5 * static_cast<double>(m) * amp *
        std::complex<double>(std::cos(phi), std::sin(phi));
  }

  IrregularityProfile prof;
  prof.dx = dx;
  prof.seed = seed;
  prof.source_id = psd.source_id;
  prof.values.assign(static_cast<std::size_t>(m) + 1, 0.0);
  fft::c2r_destructive(spectrum.data(), prof.values.data(), static_cast<int>(m));
  const double inv_m = 1.0 / static_cast<double>(m);
  for (long j = 0; j < m; ++j) prof.values[static_cast<std::size_t>(j)] *= inv_m;
  prof.values[static_cast<std::size_t>(m)] = prof.values[0];  // periodic wrap
  return prof;
}

// Welch averaged periodogram with a Hann window, one-sided, normalized so
// that integrating the estimate over frequency recovers the variance.
inline PsdModel estimate_psd(const IrregularityProfile& prof,
                             std::size_t segment_samples, double overlap = 0.5) {
  require(segment_samples >= 8, "segment too short");
  require(overlap >= 0.0 && overlap < 1.0, "bad overlap");
  const std::size_t n = prof.values.size();
  const auto hop = static_cast<std::size_t>(std::max<double>(
      1.0, std::floor(static_cast<double>(segment_samples) * (1.0 - overlap))));
  require(n >= segment_samples + 7 * hop, "profile too short: need >= 8 segments");

  std::vector<double> window(segment_samples);
  double wss = 0.0;
  for (std::size_t i = 0; i < segment_samples; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(PsdModel::kTwoPi * static_cast<double>(i) /
                                      static_cast<double>(segment_samples - 1)));
    wss += window[i] * window[i];
  }

  const std::size_t bins = segment_samples / 2 + 1;
  std::vector<double> acc(bins, 0.0);
  std::vector<double> seg(segment_samples);
  std::vector<std::complex<double>> spec(bins);
  std::size_t count = 0;
  for (std::size_t start = 0; start + segment_samples <= n; start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < segment_samples; ++i) mean += prof.values[start + i];
    mean /= static_cast<double>(segment_samples);
    for (std::size_t i = 0; i < segment_samples; ++i)
      seg[i] = (prof.values[start + i] - mean) * window[i];
    fft::r2c(seg.data(), spec.data(), static_cast<int>(segment_samples));
    for (std::size_t k = 0; k < bins; ++k) acc[k] += std::norm(spec[k]);
    ++count;
  }

  // One-sided density over angular frequency; bin spacing 2 pi/(N dx).
  PsdModel est;
  est.source_id = "welch(" + prof.source_id + ")";
  const double scale = prof.dx / (PsdModel::kTwoPi * wss * static_cast<double>(count));
  for (std::size_t k = 1; k + 1 < bins; ++k) {
    double w = PsdModel::kTwoPi * static_cast<double>(k) /
               (static_cast<double>(segment_samples) * prof.dx);
    est.omega.push_back(w);
    est.density.push_back(2.0 * scale * acc[k]);
  }
  est.wavelength_min = PsdModel::kTwoPi / est.omega.back();
  est.wavelength_max = PsdModel::kTwoPi / est.omega.front();
  est.validate();
  return est;
}

// Time series of the irregularity under each wheelset; wheel j starts at
// start_positions[j] and advances at the running speed.
inline Eigen::MatrixXd sample_under_wheels(const IrregularityProfile& prof,
                                           double speed,
                                           const std::array<double, 4>& start_positions,
                                           double dt, long samples) {
  require(samples >= 1 && dt > 0, "bad time grid");
  double horizon = speed * dt * static_cast<double>(samples - 1);
  for (double s0 : start_positions)
    require(s0 >= 0.0 && s0 + horizon <= prof.length() + 1e-12,
            "wheel window exceeds profile extent");
  Eigen::MatrixXd out(4, samples);
  for (long s = 0; s < samples; ++s) {
    double advance = speed * dt * static_cast<double>(s);
    for (int j = 0; j < 4; ++j)
      out(j, s) = prof.at(start_positions[static_cast<std::size_t>(j)] + advance);
  }
  return out;
}

// Excitation closure for the integrator: irregularity under each wheel as a
// continuous function of time. The profile must outlive the closure.
inline WheelExcitation profile_excitation(const IrregularityProfile& prof,
                                          const CodesSystem& sys) {
  std::array<double, 4> start{};
  for (int j = 0; j < 4; ++j)
    start[static_cast<std::size_t>(j)] = sys.wheel_position(j, 0.0);
  double speed = sys.params.beam.speed;
  return [&prof, start, speed](double t) {
    std::array<double, 4> irre{};
    for (int j = 0; j < 4; ++j)
      irre[static_cast<std::size_t>(j)] =
          prof.at(start[static_cast<std::size_t>(j)] + speed * t);
    return irre;
  };
}

}  // namespace vtlab
