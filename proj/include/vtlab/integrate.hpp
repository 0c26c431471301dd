#pragma once

// Time integration of M xdd + C xd + K x = F(t, x) with three interchangeable
// schemes:
//   - zhai:    explicit two-step predictor (psi/phi parameters), bootstrapped
//              with one Newmark step; acceleration closed from the equation.
//   - newmark: implicit average-acceleration family; the state-dependent
//              forcing (wheel-rail contact) is handled by fixed-point
//              iteration per step, with a single halve-and-retry fallback.
//   - rk4:     classic Runge-Kutta on the first-order form.
//
// Every scheme reports X, V and A from its own state, decimated by
// output_stride; a running residual max tracks how well the stored triples
// satisfy the assembled equations on the fine grid.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <optional>

#include "vtlab/codes.hpp"
#include "vtlab/common.hpp"

namespace vtlab {

enum class Scheme { zhai, newmark, rk4 };

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "zhai") return Scheme::zhai;
  if (s == "newmark") return Scheme::newmark;
  if (s == "rk4") return Scheme::rk4;
  throw ValidationError("unknown scheme: " + s);
}

struct IntegratorConfig {
  Scheme scheme = Scheme::zhai;
  double dt = 1e-4;           // s
  double zhai_psi = 0.5;
  double zhai_phi = 0.5;
  double newmark_beta = 0.25;
  double newmark_gamma = 0.5;
  int output_stride = 10;
  double fp_tol = 1e-10;
  int fp_max_iter = 20;
  double divergence_factor = 1e6;
  bool track_residual = true;  // off for pure-solve timing

  void validate() const {
    require(dt > 0, "dt must be positive");
    require(output_stride >= 1, "output stride must be >= 1");
    require(fp_max_iter >= 1 && fp_tol > 0, "bad fixed-point settings");
  }
};

// Generic second-order system; forcing may depend on the current state
// (nonlinear contact) but not on velocity.
struct SecondOrderSystem {
  Eigen::MatrixXd M, C, K;
  std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)> forcing;

  int n() const { return static_cast<int>(M.rows()); }
};

using WheelExcitation = std::function<std::array<double, 4>(double)>;

inline WheelExcitation zero_excitation() {
  return [](double) { return std::array<double, 4>{0.0, 0.0, 0.0, 0.0}; };
}

inline SecondOrderSystem make_second_order(const CodesSystem& sys,
                                           WheelExcitation excitation) {
  SecondOrderSystem s;
  s.M = sys.M;
  s.C = sys.C;
  s.K = sys.K;
  s.forcing = [&sys, excitation = std::move(excitation)](
                  double t, const Eigen::VectorXd& x, Eigen::VectorXd& F) {
    sys.forcing(t, x, excitation(t), F);
  };
  return s;
}

// Decimated generalized-coordinate trajectories.
struct RawTrajectory {
  double dt_out = 0.0;
  Eigen::MatrixXd X, V, A;  // [n x samples]
  double residual_inf = 0.0;
  double forcing_inf = 0.0;
};

namespace detail {

class IntegrationRun {
 public:
  IntegrationRun(const SecondOrderSystem& sys, const IntegratorConfig& cfg)
      : sys_(sys), cfg_(cfg), n_(sys.n()) {
    cfg.validate();
    require(sys_.M.rows() == sys_.M.cols() && sys_.C.rows() == n_ &&
                sys_.K.rows() == n_,
            "system matrices must be square and consistent");
    mass_diagonal_ = sys_.M.isDiagonal(0.0);
    if (mass_diagonal_)
      inv_mass_ = sys_.M.diagonal().cwiseInverse();
    else
      mass_lu_ = sys_.M.partialPivLu();
    F_.resize(n_);
    scratch_.resize(n_);
  }

  void solve_mass(const Eigen::VectorXd& rhs, Eigen::VectorXd& out) const {
    if (mass_diagonal_)
      out = inv_mass_.cwiseProduct(rhs);
    else
      out = mass_lu_.solve(rhs);
  }

  void acceleration(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                    Eigen::VectorXd& a) {
    sys_.forcing(t, x, F_);
    scratch_ = F_ - sys_.C * v - sys_.K * x;
    solve_mass(scratch_, a);
  }

  // One Newmark step; on fixed-point failure returns false without touching
  // the state.
  bool newmark_step(double t, double dt, Eigen::VectorXd& x, Eigen::VectorXd& v,
                    Eigen::VectorXd& a) {
    const double beta = cfg_.newmark_beta, gamma = cfg_.newmark_gamma;
    const double a1 = 1.0 / (beta * dt * dt), a2 = 1.0 / (beta * dt),
                 a3 = 1.0 / (2.0 * beta) - 1.0;
    const double a4 = gamma / (beta * dt), a5 = gamma / beta - 1.0,
                 a6 = dt * (gamma / (2.0 * beta) - 1.0);

    const Eigen::PartialPivLU<Eigen::MatrixXd>& lu = effective_lu(dt, a1, a4);
    Eigen::VectorXd rhs_const =
        sys_.M * (a1 * x + a2 * v + a3 * a) + sys_.C * (a4 * x + a5 * v + a6 * a);

    Eigen::VectorXd xg = x + dt * v + 0.5 * dt * dt * a;  // explicit predictor
    Eigen::VectorXd xn;
    bool converged = false;
    for (int it = 0; it < cfg_.fp_max_iter; ++it) {
      sys_.forcing(t + dt, xg, F_);
      xn = lu.solve(F_ + rhs_const);
      double diff = (xn - xg).lpNorm<Eigen::Infinity>();
      double scale = std::max(1.0, xn.lpNorm<Eigen::Infinity>());
      xg = xn;
      if (diff <= cfg_.fp_tol * scale) {
        converged = true;
        break;
      }
    }
    if (!converged) return false;

    Eigen::VectorXd an = a1 * (xn - x) - a2 * v - a3 * a;
    v += dt * ((1.0 - gamma) * a + gamma * an);
    x = xn;
    a = an;
    return true;
  }

  void newmark_step_checked(double t, double dt, Eigen::VectorXd& x,
                            Eigen::VectorXd& v, Eigen::VectorXd& a) {
    if (newmark_step(t, dt, x, v, a)) return;
    // Retry once with two half steps.
    if (newmark_step(t, 0.5 * dt, x, v, a) &&
        newmark_step(t + 0.5 * dt, 0.5 * dt, x, v, a))
      return;
    throw NumericalError("Newmark contact fixed point did not converge");
  }

  void zhai_step(double t, double dt, Eigen::VectorXd& x, Eigen::VectorXd& v,
                 Eigen::VectorXd& a, Eigen::VectorXd& a_prev) {
    const double psi = cfg_.zhai_psi, phi = cfg_.zhai_phi;
    Eigen::VectorXd xn =
        x + v * dt + (0.5 + psi) * a * dt * dt - psi * a_prev * dt * dt;
    Eigen::VectorXd vn = v + (1.0 + phi) * a * dt - phi * a_prev * dt;
    a_prev = a;
    acceleration(t + dt, xn, vn, a);
    x = xn;
    v = vn;
  }

  void rk4_step(double t, double dt, Eigen::VectorXd& x, Eigen::VectorXd& v) {
    Eigen::VectorXd k1x = v, k1v(n_), k2x(n_), k2v(n_), k3x(n_), k3v(n_),
        k4x(n_), k4v(n_);
    acceleration(t, x, v, k1v);
    k2x = v + 0.5 * dt * k1v;
    acceleration(t + 0.5 * dt, x + 0.5 * dt * k1x, k2x, k2v);
    k3x = v + 0.5 * dt * k2v;
    acceleration(t + 0.5 * dt, x + 0.5 * dt * k2x, k3x, k3v);
    k4x = v + dt * k3v;
    acceleration(t + dt, x + dt * k3x, k4x, k4v);
    x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  }

 private:
  const Eigen::PartialPivLU<Eigen::MatrixXd>& effective_lu(double dt, double a1,
                                                           double a4) {
    if (!eff_lu_ || eff_dt_ != dt) {
      eff_lu_.emplace((sys_.K + a1 * sys_.M + a4 * sys_.C).eval());
      eff_dt_ = dt;
    }
    return *eff_lu_;
  }

  const SecondOrderSystem& sys_;
  const IntegratorConfig& cfg_;
  int n_;
  bool mass_diagonal_ = false;
  Eigen::VectorXd inv_mass_;
  Eigen::PartialPivLU<Eigen::MatrixXd> mass_lu_;
  std::optional<Eigen::PartialPivLU<Eigen::MatrixXd>> eff_lu_;
  double eff_dt_ = -1.0;
  Eigen::VectorXd F_, scratch_;
};

}  // namespace detail

// Integrate generalized coordinates over [0, duration]; initial state
// defaults to zero. duration must be an integer number of steps.
inline RawTrajectory integrate_states(const SecondOrderSystem& sys,
                                      const IntegratorConfig& cfg,
                                      double duration,
                                      const Eigen::VectorXd* x0 = nullptr,
                                      const Eigen::VectorXd* v0 = nullptr) {
  cfg.validate();
  const int n = sys.n();
  const auto steps_exact = duration / cfg.dt;
  const long steps = std::lround(steps_exact);
  require(steps >= 1 && std::abs(steps_exact - static_cast<double>(steps)) < 1e-9,
          "duration must be an integer multiple of dt");
  const long samples = steps / cfg.output_stride + 1;
  require(steps % cfg.output_stride == 0,
          "step count must be divisible by the output stride");

  detail::IntegrationRun run(sys, cfg);

  Eigen::VectorXd x = x0 ? *x0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v = v0 ? *v0 : Eigen::VectorXd::Zero(n);
  require(x.size() == n && v.size() == n, "initial state size mismatch");

  RawTrajectory out;
  out.dt_out = cfg.dt * cfg.output_stride;
  out.X.resize(n, samples);
  out.V.resize(n, samples);
  out.A.resize(n, samples);

  Eigen::VectorXd a(n), a_prev(n), F(n), resid(n);
  run.acceleration(0.0, x, v, a);
  a_prev = a;

  const double diverge_scale =
      cfg.divergence_factor * std::max(1.0, x.lpNorm<Eigen::Infinity>());

  long sample_idx = 0;
  auto record_sample = [&](long step) {
    if (step % cfg.output_stride != 0) return;
    out.X.col(sample_idx) = x;
    out.V.col(sample_idx) = v;
    out.A.col(sample_idx) = a;
    ++sample_idx;
  };
  auto track_residual = [&](double t) {
    if (!cfg.track_residual) return;
    sys.forcing(t, x, F);
    resid = sys.M * a + sys.C * v + sys.K * x - F;
    out.residual_inf = std::max(out.residual_inf, resid.lpNorm<Eigen::Infinity>());
    out.forcing_inf = std::max(out.forcing_inf, F.lpNorm<Eigen::Infinity>());
  };

  track_residual(0.0);
  record_sample(0);

  for (long s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) * cfg.dt;
    switch (cfg.scheme) {
      case Scheme::zhai:
        if (s == 0) {
          // Two-step scheme: bootstrap the missing history with Newmark.
          Eigen::VectorXd a0 = a;
          run.newmark_step_checked(t, cfg.dt, x, v, a);
          a_prev = a0;
        } else {
          run.zhai_step(t, cfg.dt, x, v, a, a_prev);
        }
        break;
      case Scheme::newmark:
        run.newmark_step_checked(t, cfg.dt, x, v, a);
        break;
      case Scheme::rk4:
        run.rk4_step(t, cfg.dt, x, v);
        run.acceleration(t + cfg.dt, x, v, a);
        break;
    }
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > diverge_scale)
      throw NumericalError("integration diverged at t=" + std::to_string(t + cfg.dt));
    track_residual(t + cfg.dt);
    record_sample(s + 1);
  }
  return out;
}

// Full data pair for the vehicle-track system: 14 output channels
// (10 vehicle DOFs + 4 rail displacements under the wheels), their first and
// second time derivatives, and the irregularity series under each wheelset.
struct TrajectoryRecord {
  double dt_out = 0.0;
  double duration = 0.0;
  Eigen::VectorXd params;        // varied parameter vector (13), set by caller
  Eigen::MatrixXd irre;          // [4 x samples]
  Eigen::MatrixXd X, V, A;       // [14 x samples]
  Eigen::MatrixXd modal_q, modal_qd, modal_qdd;  // optional, [NM x samples]
  double residual_inf = 0.0;
  double forcing_inf = 0.0;

  long samples() const { return X.cols(); }
};

// Reject windows whose wheels leave [lo_frac, hi_frac] of the rail span.
inline void check_window(const CodesSystem& sys, double duration,
                         double lo_frac = 0.1, double hi_frac = 0.9) {
  const double l = sys.params.beam.rail_length;
  for (int j = 0; j < 4; ++j) {
    double x_begin = sys.wheel_position(j, 0.0);
    double x_end = sys.wheel_position(j, duration);
    require(x_begin >= lo_frac * l && x_begin <= hi_frac * l &&
                x_end >= lo_frac * l && x_end <= hi_frac * l,
            "wheel window leaves the usable rail span");
  }
}

inline TrajectoryRecord integrate(const CodesSystem& sys,
                                  const WheelExcitation& excitation,
                                  const IntegratorConfig& cfg, double duration,
                                  const Eigen::VectorXd* x0 = nullptr,
                                  const Eigen::VectorXd* v0 = nullptr,
                                  bool keep_modal = false) {
  check_window(sys, duration, 0.0, 1.0);  // hard span bound; generation
                                          // applies the 10% guard itself
  SecondOrderSystem sos = make_second_order(sys, excitation);

  Eigen::VectorXd x_init;
  if (!x0) {
    x_init = static_equilibrium(sys, excitation(0.0));
    x0 = &x_init;
  }
  RawTrajectory raw = integrate_states(sos, cfg, duration, x0, v0);

  const long samples = raw.X.cols();
  const int nm = sys.nm();
  const double speed = sys.params.beam.speed;

  TrajectoryRecord rec;
  rec.dt_out = raw.dt_out;
  rec.duration = duration;
  rec.residual_inf = raw.residual_inf;
  rec.forcing_inf = raw.forcing_inf;
  rec.irre.resize(4, samples);
  rec.X.resize(kOutputChannels, samples);
  rec.V.resize(kOutputChannels, samples);
  rec.A.resize(kOutputChannels, samples);
  if (keep_modal) {
    rec.modal_q.resize(nm, samples);
    rec.modal_qd.resize(nm, samples);
    rec.modal_qdd.resize(nm, samples);
  }

  for (long s = 0; s < samples; ++s) {
    const double t = raw.dt_out * static_cast<double>(s);
    rec.X.col(s).head(kVehicleDofs) = raw.X.col(s).head(kVehicleDofs);
    rec.V.col(s).head(kVehicleDofs) = raw.V.col(s).head(kVehicleDofs);
    rec.A.col(s).head(kVehicleDofs) = raw.A.col(s).head(kVehicleDofs);
    auto irre = excitation(t);
    for (int j = 0; j < 4; ++j) {
      rec.irre(j, s) = irre[static_cast<std::size_t>(j)];
      // Rail response under the moving wheel: material derivatives carry the
      // advection terms v*Z' and v^2*Z''.
      double xw = sys.wheel_position(j, t);
      double z = 0.0, zd = 0.0, zdd = 0.0;
      for (int k = 1; k <= nm; ++k) {
        const double q = raw.X(kVehicleDofs + k - 1, s);
        const double qd = raw.V(kVehicleDofs + k - 1, s);
        const double qdd = raw.A(kVehicleDofs + k - 1, s);
        const double Z = sys.modal.shape(k, xw);
        const double Zx = sys.modal.shape_dx(k, xw);
        const double Zxx = sys.modal.shape_dxx(k, xw);
        z += Z * q;
        zd += Z * qd + speed * Zx * q;
        zdd += Z * qdd + 2.0 * speed * Zx * qd + speed * speed * Zxx * q;
      }
      rec.X(kVehicleDofs + j, s) = z;
      rec.V(kVehicleDofs + j, s) = zd;
      rec.A(kVehicleDofs + j, s) = zdd;
    }
    if (keep_modal) {
      rec.modal_q.col(s) = raw.X.col(s).tail(nm);
      rec.modal_qd.col(s) = raw.V.col(s).tail(nm);
      rec.modal_qdd.col(s) = raw.A.col(s).tail(nm);
    }
  }
  return rec;
}

}  // namespace vtlab
