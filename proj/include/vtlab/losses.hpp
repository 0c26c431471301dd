#pragma once

// The four training objectives: data loss (time-integrated squared error),
// plain ODE residual loss, magnitude-weighted ODE residual loss, and the
// direct derivative loss, plus the shared finite-difference derivative
// operator. Losses consuming stencil derivatives trim two samples at each
// window end.

#include <optional>

#include "vtlab/dataset.hpp"
#include "vtlab/residual.hpp"
#include "vtlab/tensor.hpp"

namespace vtlab {

enum class LossMode { data_only, plain_ode, weighted_ode, direct_deriv };

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "data_only") return LossMode::data_only;
  if (s == "plain_ode") return LossMode::plain_ode;
  if (s == "weighted_ode") return LossMode::weighted_ode;
  if (s == "direct_deriv") return LossMode::direct_deriv;
  throw ValidationError("unknown loss mode: " + s);
}

inline std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::data_only: return "data_only";
    case LossMode::plain_ode: return "plain_ode";
    case LossMode::weighted_ode: return "weighted_ode";
    case LossMode::direct_deriv: return "direct_deriv";
  }
  return "?";
}

struct LossConfig {
  LossMode mode = LossMode::data_only;
  double eta = 1.0;          // ODE loss weight
  double sensitivity = 0.02; // r, used when computing weight factors
  int trim = 2;              // boundary samples dropped by derivative consumers

  void validate() const {
    require(eta >= 0.0, "eta must be nonnegative");
    require(trim >= 0, "trim must be nonnegative");
    if (mode == LossMode::weighted_ode)
      require(sensitivity > 0.0, "weighted mode needs r > 0");
  }
};

// Trapezoid quadrature weights over the kept range [trim, T-1-trim];
// trimmed samples get zero weight.
inline Eigen::VectorXd time_weights(long T, double dt, int trim = 0) {
  require(T - 2L * trim >= 2, "window too short after trimming");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(T);
  long lo = trim, hi = T - 1 - trim;
  for (long t = lo; t <= hi; ++t) w[t] = dt;
  w[lo] = 0.5 * dt;
  w[hi] = 0.5 * dt;
  return w;
}

// Plain averaging weights over the kept range.
inline Eigen::VectorXd mean_weights(long T, int trim = 0) {
  require(T - 2L * trim >= 1, "window too short after trimming");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(T);
  long lo = trim, hi = T - 1 - trim;
  double v = 1.0 / static_cast<double>(hi - lo + 1);
  for (long t = lo; t <= hi; ++t) w[t] = v;
  return w;
}

// Second-order finite differences along time (interior central stencils,
// one-sided ends; the ends are dropped by the trim policy downstream).
inline ad::Tensor numerical_derivative(const ad::Tensor& series, double dt,
                                       int order) {
  return ad::stencil_derivative(series, dt, order);
}

// Mean over batch and channels of the time-integrated squared error.
inline ad::Tensor data_loss(const ad::Tensor& pred, const ad::Tensor& truth,
                            double dt, int trim = 0) {
  require(pred.shape() == truth.shape(), "data_loss: shape mismatch");
  return ad::weighted_sq_mean(ad::sub(pred, truth),
                              time_weights(pred.shape().t, dt, trim));
}

// ---------------------------------------------------------------------------
// ODE residual losses.

// Per-batch description of the equations: constant matrices acting on the
// first n_state channels plus a tape-differentiable forcing builder over the
// full predicted physical tensor.
struct BatchResidualSpec {
  std::vector<Eigen::MatrixXd> M, C, K;  // per sample, [n_eq x n_state]
  int n_state = 0;
  int n_eq = 0;
  std::function<ad::Tensor(const ad::Tensor& pred_physical)> forcing;

  void validate(long batch) const {
    require(static_cast<long>(M.size()) == batch && C.size() == M.size() &&
                K.size() == M.size(),
            "residual spec batch mismatch");
    require(n_state >= 1 && n_eq >= 1 && forcing, "incomplete residual spec");
  }
};

// Residual from an explicit solution triple (weights path and diagnostics).
inline ad::Tensor ode_residual_from_triple(const BatchResidualSpec& spec,
                                           const ad::Tensor& X,
                                           const ad::Tensor& V,
                                           const ad::Tensor& A) {
  spec.validate(X.shape().b);
  ad::Tensor acc = ad::linear_map_per_sample(
      ad::slice_channels(A, 0, spec.n_state), spec.M);
  ad::Tensor vel = ad::linear_map_per_sample(
      ad::slice_channels(V, 0, spec.n_state), spec.C);
  ad::Tensor pos = ad::linear_map_per_sample(
      ad::slice_channels(X, 0, spec.n_state), spec.K);
  return ad::sub(ad::add(ad::add(acc, vel), pos), spec.forcing(X));
}

// Residual from predictions alone: derivatives by finite differences.
inline ad::Tensor ode_residual_from_pred(const BatchResidualSpec& spec,
                                         const ad::Tensor& pred_physical,
                                         double dt) {
  ad::Tensor v = numerical_derivative(pred_physical, dt, 1);
  ad::Tensor a = numerical_derivative(pred_physical, dt, 2);
  return ode_residual_from_triple(spec, pred_physical, v, a);
}

// Plain mode: eta * mean over batch/equations/kept-time of the squared
// residual. Weighted mode divides each equation's residual by its magnitude
// weight factor before squaring.
inline ad::Tensor ode_residual_loss(const BatchResidualSpec& spec,
                                    const ad::Tensor& pred_physical, double dt,
                                    const LossConfig& cfg,
                                    const Eigen::MatrixXd* phi = nullptr) {
  cfg.validate();
  ad::Tensor res = ode_residual_from_pred(spec, pred_physical, dt);
  if (cfg.mode == LossMode::weighted_ode) {
    require(phi != nullptr, "weighted mode needs weight factors");
    require(phi->rows() == res.shape().b && phi->cols() == spec.n_eq,
            "weight factor shape mismatch");
    require(phi->minCoeff() > 0.0, "weight factors must be strictly positive");
    res = ad::scale_rows(res, phi->cwiseInverse());
  }
  ad::Tensor loss =
      ad::weighted_sq_mean(res, mean_weights(res.shape().t, cfg.trim));
  return ad::scale(loss, cfg.eta);
}

// Supervision on first and second derivatives of the prediction against the
// integrator-produced ground truth.
inline ad::Tensor direct_derivative_loss(const ad::Tensor& pred,
                                         const ad::Tensor& truth_v,
                                         const ad::Tensor& truth_a, double dt,
                                         int trim = 2) {
  require(pred.shape() == truth_v.shape() && pred.shape() == truth_a.shape(),
          "direct_derivative_loss: shape mismatch");
  ad::Tensor d1 = numerical_derivative(pred, dt, 1);
  ad::Tensor d2 = numerical_derivative(pred, dt, 2);
  return ad::add(data_loss(d1, truth_v, dt, trim), data_loss(d2, truth_a, dt, trim));
}

// Composition per algorithm. Components not used by the mode may be left
// undefined.
inline ad::Tensor total_loss(const LossConfig& cfg, const ad::Tensor& data,
                             const ad::Tensor& ode = {},
                             const ad::Tensor& deriv = {}) {
  cfg.validate();
  require(data.defined(), "total_loss: data component required");
  switch (cfg.mode) {
    case LossMode::data_only:
      return data;
    case LossMode::plain_ode:
    case LossMode::weighted_ode:
      require(ode.defined(), "total_loss: ODE component required");
      return ad::add(data, ode);
    case LossMode::direct_deriv:
      require(deriv.defined(), "total_loss: derivative component required");
      return ad::add(data, deriv);
  }
  throw ValidationError("unreachable loss mode");
}

// ---------------------------------------------------------------------------
// Vehicle-track residual spec for a batch of records. The forcing closure
// recomputes the contact force from the predicted wheel and rail channels and
// the (constant) per-pair irregularity series.

inline BatchResidualSpec vtcd_batch_spec(
    const std::vector<const DatasetRecord*>& batch, const VehicleParams& base) {
  require(!batch.empty(), "empty batch");
  const long B = static_cast<long>(batch.size());
  const long T = batch.front()->X.cols();

  BatchResidualSpec spec;
  spec.n_state = kVehicleDofs;
  spec.n_eq = kResidualEquations;
  Eigen::MatrixXd gravity(B, kVehicleDofs);
  Eigen::MatrixXd inv_g(B, 4);
  double exponent = base.beam.contact_exponent;
  for (long b = 0; b < B; ++b) {
    VehicleParams p = apply_param_vector(base, batch[static_cast<std::size_t>(b)]->params.data());
    auto blocks = VehicleBlocks::from(p);
    spec.M.push_back(blocks.M);
    spec.C.push_back(blocks.C);
    spec.K.push_back(blocks.K);
    gravity.row(b) = blocks.gravity_rhs.transpose();
    inv_g.row(b).setConstant(1.0 / blocks.contact_constant);
  }

  ad::Tensor irre = ad::Tensor::zeros({B, 4, T});
  for (long b = 0; b < B; ++b)
    for (int ch = 0; ch < 4; ++ch)
      for (long t = 0; t < T; ++t)
        irre.at(b, ch, t) = (*batch[static_cast<std::size_t>(b)]).irre(ch, t);

  spec.forcing = [gravity, inv_g, exponent, irre, B, T](const ad::Tensor& pred) {
    require(pred.shape().c == kOutputChannels, "forcing: expected 14 channels");
    ad::Tensor delta = ad::sub(
        ad::sub(ad::slice_channels(pred, 6, 4), ad::slice_channels(pred, 10, 4)),
        irre);
    ad::Tensor p = ad::relu_pow(ad::scale_rows(delta, inv_g), exponent);
    ad::Tensor wheel_rows = ad::scale(p, -2.0);
    ad::Tensor zeros6 = ad::Tensor::zeros({B, 6, T});
    return ad::add_rows(ad::concat_channels({zeros6, wheel_rows}), gravity);
  };
  return spec;
}

}  // namespace vtlab
