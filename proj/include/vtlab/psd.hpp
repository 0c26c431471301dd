#pragma once

// Track irregularity spectra. A PsdModel is a tabulated one-sided spectral
// density over spatial angular frequency Omega [rad/m], linearly interpolated
// between table points, restricted to a wavelength band.
//
// File format: comment lines start with '#'; the first data-bearing line is
//   units <rad/m | cycle/m>
// followed by two-column rows `frequency density`. Densities given per
// cycle/m are converted to the rad/m basis on load.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vtlab/common.hpp"

namespace vtlab {

struct PsdModel {
  std::vector<double> omega;    // rad/m, strictly increasing
  std::vector<double> density;  // m^2 / (rad/m), >= 0
  double wavelength_min = 1.0;  // m, band edge (short)
  double wavelength_max = 120.0;  // m, band edge (long)
  std::string source_id = "inline";

  static constexpr double kTwoPi = 6.28318530717958647692;

  double omega_min() const { return kTwoPi / wavelength_max; }
  double omega_max() const { return kTwoPi / wavelength_min; }

  void validate() const {
    require(omega.size() == density.size() && omega.size() >= 2,
            "PSD table needs at least two rows");
    for (std::size_t i = 0; i < omega.size(); ++i) {
      require(density[i] >= 0.0, "PSD density must be nonnegative");
      require(i == 0 || omega[i] > omega[i - 1],
              "PSD frequencies must be strictly increasing");
    }
    require(wavelength_min > 0 && wavelength_min < wavelength_max,
            "bad wavelength band");
  }

  // Interpolated density; zero outside both the table and the band.
  double operator()(double w) const {
    if (w < omega_min() || w > omega_max()) return 0.0;
    if (w <= omega.front()) return density.front();
    if (w >= omega.back()) return density.back();
    auto it = std::upper_bound(omega.begin(), omega.end(), w);
    std::size_t hi = static_cast<std::size_t>(it - omega.begin());
    std::size_t lo = hi - 1;
    double f = (w - omega[lo]) / (omega[hi] - omega[lo]);
    return density[lo] + f * (density[hi] - density[lo]);
  }

  // Band integral of the tabulated density (trapezoid on a fine grid); this
  // is the target variance of synthesized profiles.
  double band_integral(int resolution = 20000) const {
    double a = omega_min(), b = omega_max();
    double h = (b - a) / resolution;
    double s = 0.5 * ((*this)(a) + (*this)(b));
    for (int i = 1; i < resolution; ++i) s += (*this)(a + h * i);
    return s * h;
  }
};

inline PsdModel load_psd(const std::string& path, double wavelength_min = 1.0,
                         double wavelength_max = 120.0) {
  std::ifstream in(path);
  require(in.good(), "cannot open PSD file: " + path);
  PsdModel psd;
  psd.wavelength_min = wavelength_min;
  psd.wavelength_max = wavelength_max;
  psd.source_id = path;

  std::string line;
  bool units_seen = false;
  bool per_cycle = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    if (!units_seen) {
      std::string tag, unit;
      if (ss >> tag) {
        require(tag == "units", "PSD file must declare units first: " + path);
        require(static_cast<bool>(ss >> unit), "missing unit token in " + path);
        if (unit == "cycle/m")
          per_cycle = true;
        else
          require(unit == "rad/m", "unsupported PSD unit: " + unit);
        units_seen = true;
      }
      continue;
    }
    double f, s;
    if (ss >> f >> s) {
      if (per_cycle) {
        // S_Omega(Omega) dOmega = S_f(f) df with Omega = 2 pi f.
        psd.omega.push_back(PsdModel::kTwoPi * f);
        psd.density.push_back(s / PsdModel::kTwoPi);
      } else {
        psd.omega.push_back(f);
        psd.density.push_back(s);
      }
    }
  }
  require(units_seen, "PSD file has no units line: " + path);
  psd.validate();
  return psd;
}

// Third-octave band edges covering [omega_lo, omega_hi]; bands are
// geometric with ratio 2^(1/3) anchored at omega_lo.
inline std::vector<std::pair<double, double>> third_octave_bands(double omega_lo,
                                                                 double omega_hi) {
  require(omega_lo > 0 && omega_hi > omega_lo, "bad band range");
  std::vector<std::pair<double, double>> bands;
  const double ratio = std::pow(2.0, 1.0 / 3.0);
  double lo = omega_lo;
  while (lo * ratio <= omega_hi * (1.0 + 1e-12)) {
    bands.emplace_back(lo, lo * ratio);
    lo *= ratio;
  }
  return bands;
}

}  // namespace vtlab
