#pragma once

// Assembly of the coupled second-order system
//   M xdd + C xd + K x = F(t, x)
// for the 10-DOF vehicle on a modally reduced simply supported rail.
//
// Generalized coordinates, in fixed order:
//   [Z_c, beta_c, Z_t1, beta_t1, Z_t2, beta_t2, Z_w1..Z_w4, q_1..q_NM]
// Pitch convention: the vertical displacement of a body at signed
// longitudinal offset xi (positive toward the direction of travel) is
// Z - xi * beta. Bogie 1 / wheelsets 1, 2 lead.
//
// Wheel-rail contact is nonlinear (power-law on compression) and therefore
// lives in the forcing evaluator, not in K or C. Fasteners react against the
// ground through the rail deflection at their positions, which couples all
// retained modes pairwise.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vtlab/beam.hpp"
#include "vtlab/params.hpp"

namespace vtlab {

inline constexpr int kVehicleDofs = 10;
inline constexpr int kOutputChannels = 14;  // 10 vehicle + 4 rail under wheels

inline const std::array<std::string, kOutputChannels>& output_channel_names() {
  static const std::array<std::string, kOutputChannels> names = {
      "Z_c",  "beta_c", "Z_t1", "beta_t1", "Z_t2", "beta_t2", "Z_w1",
      "Z_w2", "Z_w3",   "Z_w4", "Z_r1",    "Z_r2", "Z_r3",    "Z_r4"};
  return names;
}

struct ContactState {
  std::array<double, 4> compression{};  // delta_j, m
  std::array<double, 4> force{};        // p_j, N (per rail)
};

// Power-law contact on positive compression; zero when disengaged.
inline double contact_force_law(double delta, double constant, double exponent) {
  if (delta <= 0.0) return 0.0;
  double r = delta / constant;
  if (exponent == 1.5) return r * std::sqrt(r);
  return std::pow(r, exponent);
}

inline double contact_stiffness_law(double delta, double constant, double exponent) {
  if (delta <= 0.0) return 0.0;
  double r = delta / constant;
  return exponent / constant *
         (exponent == 1.5 ? std::sqrt(r) : std::pow(r, exponent - 1.0));
}

class CodesSystem {
 public:
  VehicleParams params;
  BeamModal modal;
  Eigen::MatrixXd M, C, K;          // (10+NM) square
  Eigen::VectorXd inv_mass_diag;    // M is diagonal for this topology
  double car_start = 0.0;           // car center position at t = 0, m
  std::array<double, 4> wheel_offsets{};  // relative to car center, m

  int n() const { return static_cast<int>(M.rows()); }
  int nm() const { return modal.mode_count; }

  double wheel_position(int wheel, double t) const {
    return car_start + params.beam.speed * t + wheel_offsets[static_cast<std::size_t>(wheel)];
  }

  // Rail deflection under a wheel from the modal coordinates.
  double rail_deflection(double x, const Eigen::VectorXd& state) const {
    double z = 0.0;
    for (int k = 1; k <= nm(); ++k)
      z += modal.shape(k, x) * state[kVehicleDofs + k - 1];
    return z;
  }

  ContactState contact(double t, const Eigen::VectorXd& state,
                       const std::array<double, 4>& irre) const {
    ContactState cs;
    const double G = params.beam.contact_constant;
    const double e = params.beam.contact_exponent;
    for (int j = 0; j < 4; ++j) {
      double xw = wheel_position(j, t);
      double delta = state[6 + j] - rail_deflection(xw, state) -
                     irre[static_cast<std::size_t>(j)];
      cs.compression[static_cast<std::size_t>(j)] = delta;
      cs.force[static_cast<std::size_t>(j)] = contact_force_law(delta, G, e);
    }
    return cs;
  }

  // Full forcing vector: gravity plus generalized wheel-rail forces.
  void forcing(double t, const Eigen::VectorXd& state,
               const std::array<double, 4>& irre, Eigen::VectorXd& out) const {
    out.setZero(n());
    const double g = params.gravity;
    out[0] = params.rigid.car_mass * g;
    out[2] = params.rigid.bogie_mass * g;
    out[4] = params.rigid.bogie_mass * g;
    const double mwg = params.rigid.wheelset_mass * g;
    for (int j = 0; j < 4; ++j) out[6 + j] = mwg;

    const double G = params.beam.contact_constant;
    const double e = params.beam.contact_exponent;
    for (int j = 0; j < 4; ++j) {
      double xw = wheel_position(j, t);
      // One pass over modes serves both the deflection and the scatter.
      double zr = 0.0;
      for (int k = 1; k <= nm(); ++k)
        zr += modal.shape(k, xw) * state[kVehicleDofs + k - 1];
      double delta = state[6 + j] - zr - irre[static_cast<std::size_t>(j)];
      double p = contact_force_law(delta, G, e);
      if (p != 0.0) {
        out[6 + j] -= 2.0 * p;
        for (int k = 1; k <= nm(); ++k)
          out[kVehicleDofs + k - 1] += p * modal.shape(k, xw);
      }
    }
  }

  Eigen::VectorXd forcing(double t, const Eigen::VectorXd& state,
                          const std::array<double, 4>& irre) const {
    Eigen::VectorXd f;
    forcing(t, state, irre, f);
    return f;
  }
};

// Contact state for given displacements and irregularities.
inline ContactState contact_force(const CodesSystem& sys, double t,
                                  const Eigen::VectorXd& state,
                                  const std::array<double, 4>& irre) {
  return sys.contact(t, state, irre);
}

namespace detail {

// One spring-damper lattice over the ten vehicle DOFs, filled with
// stiffnesses (K) or dampings (C). kp acts per wheelset, ks per bogie; the
// leading attachment of each pair sits at offset +arm, so pitch rows carry
// arm^2 on the diagonal and +/-arm on the cross terms.
template <typename Block>
void fill_vehicle_lattice(Block&& A, double kp, double ks, double lc, double lt) {
  // car bounce vs bogies
  A(0, 0) += 2.0 * ks;
  A(0, 2) -= ks;
  A(0, 4) -= ks;
  // car pitch vs bogies
  A(1, 1) += 2.0 * ks * lc * lc;
  A(1, 2) += ks * lc;
  A(1, 4) -= ks * lc;
  // bogie 1 bounce
  A(2, 2) += ks + 2.0 * kp;
  A(2, 0) -= ks;
  A(2, 1) += ks * lc;
  A(2, 6) -= kp;
  A(2, 7) -= kp;
  // bogie 1 pitch
  A(3, 3) += 2.0 * kp * lt * lt;
  A(3, 6) += kp * lt;
  A(3, 7) -= kp * lt;
  // bogie 2 bounce
  A(4, 4) += ks + 2.0 * kp;
  A(4, 0) -= ks;
  A(4, 1) -= ks * lc;
  A(4, 8) -= kp;
  A(4, 9) -= kp;
  // bogie 2 pitch
  A(5, 5) += 2.0 * kp * lt * lt;
  A(5, 8) += kp * lt;
  A(5, 9) -= kp * lt;
  // wheelsets
  A(6, 6) += kp; A(6, 2) -= kp; A(6, 3) += kp * lt;
  A(7, 7) += kp; A(7, 2) -= kp; A(7, 3) -= kp * lt;
  A(8, 8) += kp; A(8, 4) -= kp; A(8, 5) += kp * lt;
  A(9, 9) += kp; A(9, 4) -= kp; A(9, 5) -= kp * lt;
}

}  // namespace detail

inline CodesSystem assemble_codes(const RigidBodyParams& rigid,
                                  const SuspensionParams& susp,
                                  const BeamParams& beam, const BeamModal& modal,
                                  double gravity = 9.8) {
  rigid.validate();
  susp.validate();
  beam.validate();
  require(modal.mode_count == beam.mode_count,
          "modal data does not match beam mode count");

  CodesSystem sys;
  sys.params.rigid = rigid;
  sys.params.susp = susp;
  sys.params.beam = beam;
  sys.params.gravity = gravity;
  sys.modal = modal;

  const int nm = beam.mode_count;
  const int n = kVehicleDofs + nm;
  sys.M = Eigen::MatrixXd::Zero(n, n);
  sys.C = Eigen::MatrixXd::Zero(n, n);
  sys.K = Eigen::MatrixXd::Zero(n, n);

  const double lc = susp.semi_bogie_spacing;
  const double lt = susp.semi_wheelbase;

  sys.M(0, 0) = rigid.car_mass;
  sys.M(1, 1) = rigid.car_inertia;
  sys.M(2, 2) = rigid.bogie_mass;
  sys.M(3, 3) = rigid.bogie_inertia;
  sys.M(4, 4) = rigid.bogie_mass;
  sys.M(5, 5) = rigid.bogie_inertia;
  for (int j = 0; j < 4; ++j) sys.M(6 + j, 6 + j) = rigid.wheelset_mass;
  for (int k = 0; k < nm; ++k) sys.M(kVehicleDofs + k, kVehicleDofs + k) = 1.0;

  {
    auto kblock = sys.K.topLeftCorner(kVehicleDofs, kVehicleDofs);
    auto cblock = sys.C.topLeftCorner(kVehicleDofs, kVehicleDofs);
    detail::fill_vehicle_lattice(kblock, susp.primary_stiffness,
                                 susp.secondary_stiffness, lc, lt);
    detail::fill_vehicle_lattice(cblock, susp.primary_damping,
                                 susp.secondary_damping, lc, lt);
  }

  // Rail block: fastener reactions couple all mode pairs; the beam itself is
  // diagonal with modal stiffness omega_k^2 (unit modal mass).
  const int nf = static_cast<int>(beam.fastener_positions.size());
  Eigen::MatrixXd shapes(nm, nf);
  for (int k = 1; k <= nm; ++k)
    for (int i = 0; i < nf; ++i)
      shapes(k - 1, i) = modal.shape(k, beam.fastener_positions[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd fastener_coupling = shapes * shapes.transpose();

  sys.K.block(kVehicleDofs, kVehicleDofs, nm, nm) =
      susp.fastener_stiffness * fastener_coupling;
  sys.C.block(kVehicleDofs, kVehicleDofs, nm, nm) =
      susp.fastener_damping * fastener_coupling;
  for (int k = 0; k < nm; ++k) {
    double w = modal.omega[static_cast<std::size_t>(k)];
    sys.K(kVehicleDofs + k, kVehicleDofs + k) += w * w;
  }

  sys.inv_mass_diag = sys.M.diagonal().cwiseInverse();

  sys.wheel_offsets = {lc + lt, lc - lt, -lc + lt, -lc - lt};
  // Default start: rear wheel one meter inside the 10% boundary guard.
  sys.car_start = 0.1 * beam.rail_length + lc + lt + 1.0;
  return sys;
}

inline CodesSystem assemble_codes(const VehicleParams& p, const BeamModal& modal) {
  return assemble_codes(p.rigid, p.susp, p.beam, modal, p.gravity);
}

// Static equilibrium under gravity and the given initial irregularities;
// Newton on R(x) = K x - F(x) with the contact Jacobian, backtracking line
// search. Velocities are zero at equilibrium.
inline Eigen::VectorXd static_equilibrium(const CodesSystem& sys,
                                          const std::array<double, 4>& irre0) {
  const int n = sys.n();
  const auto& p = sys.params;
  const double G = p.beam.contact_constant;
  const double e = p.beam.contact_exponent;

  // Seed with wheels pressed to carry the static axle load.
  double axle_force =
      (p.rigid.car_mass + 2.0 * p.rigid.bogie_mass + 4.0 * p.rigid.wheelset_mass) *
      p.gravity / 8.0;
  double delta0 = G * std::pow(axle_force, 1.0 / e);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < 4; ++j) x[6 + j] = delta0 + irre0[static_cast<std::size_t>(j)];

  Eigen::VectorXd F(n), R(n);
  auto residual = [&](const Eigen::VectorXd& xx, Eigen::VectorXd& out) {
    sys.forcing(0.0, xx, irre0, F);
    out = sys.K * xx - F;
  };
  residual(x, R);
  double fscale = std::max(1.0, F.lpNorm<Eigen::Infinity>());

  for (int iter = 0; iter < 60; ++iter) {
    if (R.lpNorm<Eigen::Infinity>() <= 1e-9 * fscale) return x;

    Eigen::MatrixXd J = sys.K;
    for (int j = 0; j < 4; ++j) {
      double xw = sys.wheel_position(j, 0.0);
      double delta = x[6 + j] - sys.rail_deflection(xw, x) -
                     irre0[static_cast<std::size_t>(j)];
      double kh = contact_stiffness_law(delta, G, e);
      if (kh == 0.0) continue;
      for (int col = 0; col < sys.nm() + 1; ++col) {
        // d(delta)/dZ_wj = 1, d(delta)/dq_k = -Z_k(xw)
        double ddelta = (col == 0) ? 1.0 : -sys.modal.shape(col, xw);
        int ci = (col == 0) ? 6 + j : kVehicleDofs + col - 1;
        J(6 + j, ci) += 2.0 * kh * ddelta;
        for (int k = 1; k <= sys.nm(); ++k)
          J(kVehicleDofs + k - 1, ci) -= sys.modal.shape(k, xw) * kh * ddelta;
      }
    }

    Eigen::VectorXd step = J.partialPivLu().solve(R);
    double alpha = 1.0;
    double base = R.lpNorm<Eigen::Infinity>();
    Eigen::VectorXd xn, Rn;
    for (; alpha >= 1e-3; alpha *= 0.5) {
      xn = x - alpha * step;
      residual(xn, Rn);
      if (Rn.lpNorm<Eigen::Infinity>() < base) break;
    }
    if (alpha < 1e-3) throw NumericalError("static equilibrium line search stalled");
    x = xn;
    R = Rn;
  }
  throw NumericalError("static equilibrium did not converge");
}

// Rail displacement series under the wheels from modal coordinate series.
// q_series: [NM x steps]; positions: [4 x steps], must stay inside the span.
inline Eigen::MatrixXd reduce_rail_output(const Eigen::MatrixXd& q_series,
                                          const BeamModal& modal,
                                          const Eigen::MatrixXd& positions) {
  require(q_series.rows() == modal.mode_count,
          "mode count mismatch in reduce_rail_output");
  require(positions.rows() == 4 && positions.cols() == q_series.cols(),
          "positions must be [4 x steps]");
  for (int j = 0; j < 4; ++j)
    for (int s = 0; s < positions.cols(); ++s)
      require(positions(j, s) >= 0.0 && positions(j, s) <= modal.rail_length,
              "wheel position leaves the rail span");

  Eigen::MatrixXd out(4, q_series.cols());
  for (int s = 0; s < q_series.cols(); ++s) {
    for (int j = 0; j < 4; ++j) {
      double z = 0.0;
      for (int k = 1; k <= modal.mode_count; ++k)
        z += modal.shape(k, positions(j, s)) * q_series(k - 1, s);
      out(j, s) = z;
    }
  }
  return out;
}

}  // namespace vtlab
