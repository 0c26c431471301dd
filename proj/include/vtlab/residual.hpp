#pragma once

// Per-pair residual evaluation of the ten vehicle equations on the 14
// learned output channels. The rail modal coordinates are not part of the
// learned output, so only the vehicle rows are checkable; they close over
// the rail through the contact force recomputed from the rail-under-wheel
// channels.

#include <Eigen/Dense>

#include "vtlab/codes.hpp"
#include "vtlab/params.hpp"

namespace vtlab {

inline constexpr int kResidualEquations = kVehicleDofs;  // 10

// Everything the vehicle-row residual needs from one parameter draw.
struct VehicleBlocks {
  Eigen::MatrixXd M, C, K;        // 10 x 10
  Eigen::VectorXd gravity_rhs;    // 10
  double contact_constant = 0.0;
  double contact_exponent = 1.5;

  static VehicleBlocks from(const VehicleParams& p) {
    VehicleBlocks b;
    b.M = Eigen::MatrixXd::Zero(kVehicleDofs, kVehicleDofs);
    b.C = Eigen::MatrixXd::Zero(kVehicleDofs, kVehicleDofs);
    b.K = Eigen::MatrixXd::Zero(kVehicleDofs, kVehicleDofs);
    b.M(0, 0) = p.rigid.car_mass;
    b.M(1, 1) = p.rigid.car_inertia;
    b.M(2, 2) = p.rigid.bogie_mass;
    b.M(3, 3) = p.rigid.bogie_inertia;
    b.M(4, 4) = p.rigid.bogie_mass;
    b.M(5, 5) = p.rigid.bogie_inertia;
    for (int j = 0; j < 4; ++j) b.M(6 + j, 6 + j) = p.rigid.wheelset_mass;
    detail::fill_vehicle_lattice(b.K, p.susp.primary_stiffness,
                                 p.susp.secondary_stiffness,
                                 p.susp.semi_bogie_spacing, p.susp.semi_wheelbase);
    detail::fill_vehicle_lattice(b.C, p.susp.primary_damping,
                                 p.susp.secondary_damping,
                                 p.susp.semi_bogie_spacing, p.susp.semi_wheelbase);
    b.gravity_rhs = Eigen::VectorXd::Zero(kVehicleDofs);
    b.gravity_rhs[0] = p.rigid.car_mass * p.gravity;
    b.gravity_rhs[2] = p.rigid.bogie_mass * p.gravity;
    b.gravity_rhs[4] = p.rigid.bogie_mass * p.gravity;
    for (int j = 0; j < 4; ++j) b.gravity_rhs[6 + j] = p.rigid.wheelset_mass * p.gravity;
    b.contact_constant = p.beam.contact_constant;
    b.contact_exponent = p.beam.contact_exponent;
    return b;
  }
};

// Residual of the vehicle rows, [10 x samples], from a solution triple on
// the 14 output channels. X/V/A: [14 x S]; irre: [4 x S].
inline Eigen::MatrixXd vtcd_residual(const VehicleBlocks& b,
                                     const Eigen::MatrixXd& X,
                                     const Eigen::MatrixXd& V,
                                     const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& irre) {
  require(X.rows() == kOutputChannels && V.rows() == X.rows() &&
              A.rows() == X.rows() && irre.rows() == 4,
          "bad channel layout");
  const long S = X.cols();
  Eigen::MatrixXd res = b.M * A.topRows(kVehicleDofs) +
                        b.C * V.topRows(kVehicleDofs) +
                        b.K * X.topRows(kVehicleDofs);
  res.colwise() -= b.gravity_rhs;
  for (long s = 0; s < S; ++s) {
    for (int j = 0; j < 4; ++j) {
      double delta = X(6 + j, s) - X(kVehicleDofs + j, s) - irre(j, s);
      res(6 + j, s) +=
          2.0 * contact_force_law(delta, b.contact_constant, b.contact_exponent);
    }
  }
  return res;
}

}  // namespace vtlab
