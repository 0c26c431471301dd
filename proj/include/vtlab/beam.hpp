#pragma once

// Modal reduction of the simply supported Euler beam rail.
//
// Mass-normalized sine modes:
//   Z_k(x) = sqrt(2/(m_r l)) sin(k pi x / l)
// so the modal mass m_r * int Z_k^2 dx is exactly 1 and the modal stiffness
// is (E I / m_r) (k pi / l)^4.

#include <cmath>
#include <vector>

#include "vtlab/params.hpp"

namespace vtlab {

struct BeamModal {
  int mode_count = 0;
  double rail_length = 0.0;
  double mass_per_length = 0.0;
  double norm = 0.0;                  // sqrt(2/(m_r l))
  double shape_integral = 0.0;        // int Z_k^2 dx = 1/m_r, same for all k
  std::vector<double> omega;          // rad/s, ascending

  // Z_k and its first two spatial derivatives; k is 1-based.
  double shape(int k, double x) const {
    return norm * std::sin(k * kPi * x / rail_length);
  }
  double shape_dx(int k, double x) const {
    double w = k * kPi / rail_length;
    return norm * w * std::cos(w * x);
  }
  double shape_dxx(int k, double x) const {
    double w = k * kPi / rail_length;
    return -norm * w * w * std::sin(w * x);
  }

  static constexpr double kPi = 3.14159265358979323846;
};

inline BeamModal beam_modal(const BeamParams& p) {
  p.validate();
  BeamModal m;
  m.mode_count = p.mode_count;
  m.rail_length = p.rail_length;
  m.mass_per_length = p.mass_per_length;
  m.norm = std::sqrt(2.0 / (p.mass_per_length * p.rail_length));
  m.shape_integral = 1.0 / p.mass_per_length;
  m.omega.resize(static_cast<std::size_t>(p.mode_count));
  const double c = std::sqrt(p.elastic_modulus * p.second_moment / p.mass_per_length);
  for (int k = 1; k <= p.mode_count; ++k) {
    double wavenumber = k * BeamModal::kPi / p.rail_length;
    m.omega[static_cast<std::size_t>(k - 1)] = wavenumber * wavenumber * c;
  }
  return m;
}

}  // namespace vtlab
