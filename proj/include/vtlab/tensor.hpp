#pragma once

// Dense rank-3 tensors [batch, channels, time] with reverse-mode automatic
// differentiation, sized for 1-D neural operators: pointwise linear maps,
// activations, real FFT along time, truncated spectral channel mixing, and
// the reductions the training losses need.
//
// Conventions:
//   - storage is contiguous, (b, c, t) -> ((b*C + c)*T + t); complex tensors
//     interleave re/im per element.
//   - rfft is unnormalized; irfft carries the 1/n.
//   - backward() releases the graph; leaves keep their accumulated grads
//     until zero_grad.
//
// Determinism: all loops have a fixed order; OpenMP is used only where
// writes are disjoint per row, so threaded and serial runs produce identical
// bits.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vtlab/common.hpp"
#include "vtlab/fft.hpp"

namespace vtlab::ad {

struct Shape {
  long b = 1, c = 1, t = 1;
  long elems() const { return b * c * t; }
  long rows() const { return b * c; }
  bool operator==(const Shape&) const = default;
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// Intra-op OpenMP switch; inference sharded across worker threads turns it
// off inside the workers to avoid oversubscription.
inline bool& intra_op_threads() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

class Node {
 public:
  Shape shape;
  bool is_complex = false;
  bool requires_grad = false;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand, same layout as value
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  long buffer_size() const { return shape.elems() * (is_complex ? 2 : 1); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(static_cast<std::size_t>(buffer_size()), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape s, bool requires_grad = false, bool complex_vals = false) {
    tune_allocator();
    auto n = std::make_shared<Node>();
    n->shape = s;
    n->is_complex = complex_vals;
    n->requires_grad = requires_grad;
    n->value.assign(static_cast<std::size_t>(n->buffer_size()), 0.0);
    return Tensor(n);
  }

  static Tensor constant(Shape s, const double* data) {
    Tensor t = zeros(s);
    std::copy(data, data + s.elems(), t.data());
    return t;
  }

  static Tensor param(Shape s, bool complex_vals = false) {
    return zeros(s, true, complex_vals);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  bool is_complex() const { return node_->is_complex; }
  bool requires_grad() const { return node_->requires_grad; }
  long size() const { return node_->buffer_size(); }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  double* grad_data() { node_->ensure_grad(); return node_->grad.data(); }
  bool has_grad() const { return !node_->grad.empty(); }

  double operator()(long b, long c, long t) const {
    return node_->value[static_cast<std::size_t>((b * shape().c + c) * shape().t + t)];
  }
  double& at(long b, long c, long t) {
    return node_->value[static_cast<std::size_t>((b * shape().c + c) * shape().t + t)];
  }

  // Scalar extraction for loss values.
  double item() const {
    require(shape().elems() == 1 && !is_complex(), "item() needs a real scalar");
    return node_->value[0];
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad() { node_->grad.clear(); }

 private:
  std::shared_ptr<Node> node_;
};

// Spectrum handle: complex coefficients plus the originating time length.
struct Spectrum {
  Tensor coeffs;     // complex [b, c, modes]
  long time_len = 0; // length of the originating real signal

  long modes() const { return coeffs.shape().t; }
};

namespace detail {

inline Tensor make_result(Shape s, bool complex_vals,
                          std::vector<std::shared_ptr<Node>> parents,
                          std::function<void(Node&)> backward) {
  bool need_grad = false;
  if (grad_mode())
    for (const auto& p : parents)
      if (p && p->requires_grad) need_grad = true;
  Tensor out = Tensor::zeros(s, need_grad, complex_vals);
  if (need_grad) {
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward);
  }
  return out;
}

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic.

inline Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape() && a.is_complex() == b.is_complex(),
          "add: shape mismatch");
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_result(
      a.shape(), a.is_complex(), {an, bn}, [an, bn](Node& self) {
        const long n = self.buffer_size();
        if (an->requires_grad) {
          an->ensure_grad();
          for (long i = 0; i < n; ++i) an->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (long i = 0; i < n; ++i) bn->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
        }
      });
  const long n = out.size();
  for (long i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape() && a.is_complex() == b.is_complex(),
          "sub: shape mismatch");
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_result(
      a.shape(), a.is_complex(), {an, bn}, [an, bn](Node& self) {
        const long n = self.buffer_size();
        if (an->requires_grad) {
          an->ensure_grad();
          for (long i = 0; i < n; ++i) an->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (long i = 0; i < n; ++i) bn->grad[static_cast<std::size_t>(i)] -= self.grad[static_cast<std::size_t>(i)];
        }
      });
  const long n = out.size();
  for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape() && !a.is_complex() && !b.is_complex(),
          "mul: real tensors of equal shape");
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_result(
      a.shape(), false, {an, bn}, [an, bn](Node& self) {
        const long n = self.buffer_size();
        if (an->requires_grad) {
          an->ensure_grad();
          for (long i = 0; i < n; ++i)
            an->grad[static_cast<std::size_t>(i)] +=
                self.grad[static_cast<std::size_t>(i)] * bn->value[static_cast<std::size_t>(i)];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (long i = 0; i < n; ++i)
            bn->grad[static_cast<std::size_t>(i)] +=
                self.grad[static_cast<std::size_t>(i)] * an->value[static_cast<std::size_t>(i)];
        }
      });
  const long n = out.size();
  for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  Tensor out = detail::make_result(
      a.shape(), a.is_complex(), {an}, [an, s](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const long n = self.buffer_size();
        for (long i = 0; i < n; ++i)
          an->grad[static_cast<std::size_t>(i)] += s * self.grad[static_cast<std::size_t>(i)];
      });
  const long n = out.size();
  for (long i = 0; i < n; ++i) out.data()[i] = s * a.data()[i];
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise linear map over channels: out[b,:,t] = W in[b,:,t] + bias.

inline Tensor pointwise_linear(const Tensor& x, const Tensor& W, const Tensor& bias) {
  const Shape xs = x.shape();
  require(!x.is_complex() && !W.is_complex(), "pointwise_linear: real only");
  require(W.shape().b == 1 && W.shape().t == xs.c, "pointwise_linear: W is [1, out, in]");
  const long cout = W.shape().c;
  if (bias.defined())
    require(bias.shape().b == 1 && bias.shape().c == cout && bias.shape().t == 1,
            "pointwise_linear: bias is [1, out, 1]");

  auto xn = x.node(), wn = W.node();
  auto biasn = bias.defined() ? bias.node() : nullptr;
  Shape os{xs.b, cout, xs.t};

  Tensor out = detail::make_result(
      os, false, {xn, wn, biasn}, [xn, wn, biasn, xs, cout](Node& self) {
        detail::MapRowC Wm(wn->value.data(), cout, xs.c);
        for (long b = 0; b < xs.b; ++b) {
          detail::MapRowC G(self.grad.data() + b * cout * xs.t, cout, xs.t);
          if (xn->requires_grad) {
            xn->ensure_grad();
            detail::MapRow GX(xn->grad.data() + b * xs.c * xs.t, xs.c, xs.t);
            GX.noalias() += Wm.transpose() * G;
          }
          if (wn->requires_grad) {
            wn->ensure_grad();
            detail::MapRowC X(xn->value.data() + b * xs.c * xs.t, xs.c, xs.t);
            detail::MapRow GW(wn->grad.data(), cout, xs.c);
            GW.noalias() += G * X.transpose();
          }
          if (biasn && biasn->requires_grad) {
            biasn->ensure_grad();
            Eigen::Map<Eigen::VectorXd> GB(biasn->grad.data(), cout);
            GB.noalias() += G.rowwise().sum();
          }
        }
      });

  detail::MapRowC Wm(W.data(), cout, xs.c);
  for (long b = 0; b < xs.b; ++b) {
    detail::MapRowC X(x.data() + b * xs.c * xs.t, xs.c, xs.t);
    detail::MapRow O(out.data() + b * cout * xs.t, cout, xs.t);
    O.noalias() = Wm * X;
    if (bias.defined())
      for (long c = 0; c < cout; ++c)
        O.row(c).array() += bias.data()[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Activations.

enum class Activation { gelu, relu, tanh };

inline Activation activation_from_string(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation: " + s);
}

namespace detail {

inline constexpr double kGeluC1 = 0.79788456080286535588;  // sqrt(2/pi)
inline constexpr double kGeluC2 = 0.044715;

inline double gelu_fwd(double x) {
  double u = kGeluC1 * (x + kGeluC2 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_bwd(double x) {
  double u = kGeluC1 * (x + kGeluC2 * x * x * x);
  double th = std::tanh(u);
  double du = kGeluC1 * (1.0 + 3.0 * kGeluC2 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

}  // namespace detail

inline Tensor activation(const Tensor& x, Activation kind) {
  require(!x.is_complex(), "activation: real only");
  auto xn = x.node();
  Tensor out = detail::make_result(
      x.shape(), false, {xn}, [xn, kind](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const long n = self.buffer_size();
#pragma omp parallel for schedule(static) if (intra_op_threads())
        for (long i = 0; i < n; ++i) {
          double xv = xn->value[static_cast<std::size_t>(i)];
          double d = 0.0;
          switch (kind) {
            case Activation::gelu: d = detail::gelu_bwd(xv); break;
            case Activation::relu: d = xv > 0.0 ? 1.0 : 0.0; break;
            case Activation::tanh: {
              double th = std::tanh(xv);
              d = 1.0 - th * th;
              break;
            }
          }
          xn->grad[static_cast<std::size_t>(i)] += d * self.grad[static_cast<std::size_t>(i)];
        }
      });
  const long n = out.size();
#pragma omp parallel for schedule(static) if (intra_op_threads())
  for (long i = 0; i < n; ++i) {
    double xv = x.data()[i];
    switch (kind) {
      case Activation::gelu: out.data()[i] = detail::gelu_fwd(xv); break;
      case Activation::relu: out.data()[i] = xv > 0.0 ? xv : 0.0; break;
      case Activation::tanh: out.data()[i] = std::tanh(xv); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Real FFT along time and its inverse.

inline Spectrum rfft(const Tensor& x) {
  const Shape xs = x.shape();
  require(!x.is_complex() && xs.t >= 2, "rfft: real input, time >= 2");
  const long T = xs.t;
  const long K = T / 2 + 1;
  auto xn = x.node();

  Tensor out = detail::make_result(
      {xs.b, xs.c, K}, true, {xn}, [xn, T, K](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const long rows = self.shape.rows();
        const bool even = (T % 2) == 0;
        fftw_plan plan = fft::inverse_plan(static_cast<int>(T));
#pragma omp parallel for schedule(static) if (intra_op_threads())
        for (long r = 0; r < rows; ++r) {
          // adjoint of the unnormalized r2c: halve interior bins, keep real
          // parts of DC (and Nyquist when present), then one c2r
          std::vector<std::complex<double>> H(static_cast<std::size_t>(K));
          const double* g = self.grad.data() + r * K * 2;
          H[0] = {g[0], 0.0};
          for (long k = 1; k < K - 1; ++k)
            H[static_cast<std::size_t>(k)] = {0.5 * g[2 * k], 0.5 * g[2 * k + 1]};
          if (K >= 2)
            H[static_cast<std::size_t>(K - 1)] =
                even ? std::complex<double>(g[2 * (K - 1)], 0.0)
                     : std::complex<double>(0.5 * g[2 * (K - 1)], 0.5 * g[2 * (K - 1) + 1]);
          std::vector<double> gx(static_cast<std::size_t>(T));
          fft::exec_c2r(plan, H.data(), gx.data());
          double* dst = xn->grad.data() + r * T;
          for (long t = 0; t < T; ++t) dst[t] += gx[static_cast<std::size_t>(t)];
        }
      });

  const long rows = xs.rows();
  fftw_plan plan = fft::forward_plan(static_cast<int>(T));
#pragma omp parallel for schedule(static) if (intra_op_threads())
  for (long r = 0; r < rows; ++r)
    fft::exec_r2c(plan, x.data() + r * T,
                  reinterpret_cast<std::complex<double>*>(out.data() + r * K * 2));
  return {out, T};
}

inline Tensor irfft(const Spectrum& s, long time_len) {
  const Shape cs = s.coeffs.shape();
  require(s.coeffs.is_complex(), "irfft: complex input");
  require(cs.t == time_len / 2 + 1,
          "irfft: mode count does not match the requested length");
  const long T = time_len;
  const long K = cs.t;
  auto sn = s.coeffs.node();

  Tensor out = detail::make_result(
      {cs.b, cs.c, T}, false, {sn}, [sn, T, K](Node& self) {
        if (!sn->requires_grad) return;
        sn->ensure_grad();
        const long rows = self.shape.rows();
        const bool even = (T % 2) == 0;
        const double two_over = 2.0 / static_cast<double>(T);
        const double one_over = 1.0 / static_cast<double>(T);
        fftw_plan plan = fft::forward_plan(static_cast<int>(T));
#pragma omp parallel for schedule(static) if (intra_op_threads())
        for (long r = 0; r < rows; ++r) {
          std::vector<std::complex<double>> Y(static_cast<std::size_t>(K));
          fft::exec_r2c(plan, self.grad.data() + r * T, Y.data());
          double* dst = sn->grad.data() + r * K * 2;
          dst[0] += one_over * Y[0].real();
          for (long k = 1; k < K - 1; ++k) {
            dst[2 * k] += two_over * Y[static_cast<std::size_t>(k)].real();
            dst[2 * k + 1] += two_over * Y[static_cast<std::size_t>(k)].imag();
          }
          if (K >= 2) {
            if (even) {
              dst[2 * (K - 1)] += one_over * Y[static_cast<std::size_t>(K - 1)].real();
            } else {
              dst[2 * (K - 1)] += two_over * Y[static_cast<std::size_t>(K - 1)].real();
              dst[2 * (K - 1) + 1] += two_over * Y[static_cast<std::size_t>(K - 1)].imag();
            }
          }
        }
      });

  const long rows = cs.rows();
  const double inv = 1.0 / static_cast<double>(T);
  fftw_plan plan = fft::inverse_plan(static_cast<int>(T));
#pragma omp parallel for schedule(static) if (intra_op_threads())
  for (long r = 0; r < rows; ++r) {
    std::vector<std::complex<double>> scratch(
        reinterpret_cast<const std::complex<double>*>(s.coeffs.data() + r * K * 2),
        reinterpret_cast<const std::complex<double>*>(s.coeffs.data() + (r + 1) * K * 2));
    fft::exec_c2r(plan, scratch.data(), out.data() + r * T);
    for (long t = 0; t < T; ++t) out.data()[r * T + t] *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Truncated spectral channel mixing: out[b,:,k] = R_k in[b,:,k] for
// k < k_max, zero for the remaining modes. R is complex [k_max, out, in].

inline Spectrum complex_mode_mul(const Spectrum& s, const Tensor& R) {
  const Shape cs = s.coeffs.shape();
  require(R.is_complex() && s.coeffs.is_complex(), "complex_mode_mul: complex inputs");
  const long kmax = R.shape().b;
  const long cout = R.shape().c;
  const long cin = R.shape().t;
  require(cin == cs.c, "complex_mode_mul: channel mismatch");
  require(kmax <= cs.t, "complex_mode_mul: k_max exceeds available modes");
  auto sn = s.coeffs.node();
  auto rn = R.node();
  const long K = cs.t;
  const long B = cs.b;

  Tensor out = detail::make_result(
      {B, cout, K}, true, {sn, rn}, [sn, rn, B, K, kmax, cout, cin](Node& self) {
        const double* rv = rn->value.data();
        if (sn->requires_grad) sn->ensure_grad();
        if (rn->requires_grad) rn->ensure_grad();
        for (long b = 0; b < B; ++b) {
          const double* in = sn->value.data() + b * cin * K * 2;
          const double* go = self.grad.data() + b * cout * K * 2;
          for (long k = 0; k < kmax; ++k) {
            for (long o = 0; o < cout; ++o) {
              const double gre = go[(o * K + k) * 2];
              const double gim = go[(o * K + k) * 2 + 1];
              if (gre == 0.0 && gim == 0.0) continue;
              for (long i = 0; i < cin; ++i) {
                const double are = rv[((k * cout + o) * cin + i) * 2];
                const double aim = rv[((k * cout + o) * cin + i) * 2 + 1];
                const double xre = in[(i * K + k) * 2];
                const double xim = in[(i * K + k) * 2 + 1];
                if (sn->requires_grad) {
                  // R^H g
                  sn->grad[static_cast<std::size_t>((b * cin + i) * K * 2 + 2 * k)] +=
                      are * gre + aim * gim;
                  sn->grad[static_cast<std::size_t>((b * cin + i) * K * 2 + 2 * k + 1)] +=
                      are * gim - aim * gre;
                }
                if (rn->requires_grad) {
                  // g x^H
                  rn->grad[static_cast<std::size_t>(((k * cout + o) * cin + i) * 2)] +=
                      gre * xre + gim * xim;
                  rn->grad[static_cast<std::size_t>(((k * cout + o) * cin + i) * 2 + 1)] +=
                      gim * xre - gre * xim;
                }
              }
            }
          }
        }
      });

  const double* rv = R.data();
#pragma omp parallel for schedule(static) if (intra_op_threads())
  for (long b = 0; b < B; ++b) {
    const double* in = s.coeffs.data() + b * cin * K * 2;
    double* o_base = out.data() + b * cout * K * 2;
    for (long k = 0; k < kmax; ++k) {
      for (long o = 0; o < cout; ++o) {
        double acc_re = 0.0, acc_im = 0.0;
        const double* row = rv + (k * cout + o) * cin * 2;
        for (long i = 0; i < cin; ++i) {
          const double are = row[i * 2];
          const double aim = row[i * 2 + 1];
          const double xre = in[(i * K + k) * 2];
          const double xim = in[(i * K + k) * 2 + 1];
          acc_re += are * xre - aim * xim;
          acc_im += are * xim + aim * xre;
        }
        o_base[(o * K + k) * 2] = acc_re;
        o_base[(o * K + k) * 2 + 1] = acc_im;
      }
    }
  }
  return {out, s.time_len};
}

// ---------------------------------------------------------------------------
// Second-order finite differences along time. Interior points use central
// stencils; the two end points use one-sided second-order stencils so the
// output keeps the input length (losses trim the ends anyway).

inline Tensor stencil_derivative(const Tensor& x, double dt, int order) {
  const Shape xs = x.shape();
  require(!x.is_complex(), "stencil_derivative: real input");
  require(order == 1 || order == 2, "stencil order must be 1 or 2");
  require(xs.t >= 5, "series too short for the stencil");
  auto xn = x.node();
  const long T = xs.t;
  const double inv = order == 1 ? 1.0 / (2.0 * dt) : 1.0 / (dt * dt);

  Tensor out = detail::make_result(
      xs, false, {xn}, [xn, T, inv, order](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const long rows = self.shape.rows();
#pragma omp parallel for schedule(static) if (intra_op_threads())
        for (long r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * T;
          double* gx = xn->grad.data() + r * T;
          if (order == 1) {
            // forward rows: y0 = (-3x0+4x1-x2)/(2dt), yT-1 mirrored,
            // interior y_t = (x_{t+1}-x_{t-1})/(2dt)
            gx[0] += inv * -3.0 * g[0];
            gx[1] += inv * 4.0 * g[0];
            gx[2] += inv * -1.0 * g[0];
            for (long t = 1; t + 1 < T; ++t) {
              gx[t + 1] += inv * g[t];
              gx[t - 1] -= inv * g[t];
            }
            gx[T - 1] += inv * 3.0 * g[T - 1];
            gx[T - 2] += inv * -4.0 * g[T - 1];
            gx[T - 3] += inv * 1.0 * g[T - 1];
          } else {
            // y0 = (2x0-5x1+4x2-x3)/dt^2, interior central, end mirrored
            gx[0] += inv * 2.0 * g[0];
            gx[1] += inv * -5.0 * g[0];
            gx[2] += inv * 4.0 * g[0];
            gx[3] += inv * -1.0 * g[0];
            for (long t = 1; t + 1 < T; ++t) {
              gx[t - 1] += inv * g[t];
              gx[t] += inv * -2.0 * g[t];
              gx[t + 1] += inv * g[t];
            }
            gx[T - 1] += inv * 2.0 * g[T - 1];
            gx[T - 2] += inv * -5.0 * g[T - 1];
            gx[T - 3] += inv * 4.0 * g[T - 1];
            gx[T - 4] += inv * -1.0 * g[T - 1];
          }
        }
      });

  const long rows = xs.rows();
#pragma omp parallel for schedule(static) if (intra_op_threads())
  for (long r = 0; r < rows; ++r) {
    const double* xv = x.data() + r * T;
    double* y = out.data() + r * T;
    if (order == 1) {
      y[0] = inv * (-3.0 * xv[0] + 4.0 * xv[1] - xv[2]);
      for (long t = 1; t + 1 < T; ++t) y[t] = inv * (xv[t + 1] - xv[t - 1]);
      y[T - 1] = inv * (3.0 * xv[T - 1] - 4.0 * xv[T - 2] + xv[T - 3]);
    } else {
      y[0] = inv * (2.0 * xv[0] - 5.0 * xv[1] + 4.0 * xv[2] - xv[3]);
      for (long t = 1; t + 1 < T; ++t)
        y[t] = inv * (xv[t - 1] - 2.0 * xv[t] + xv[t + 1]);
      y[T - 1] = inv * (2.0 * xv[T - 1] - 5.0 * xv[T - 2] + 4.0 * xv[T - 3] - xv[T - 4]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel slicing / concatenation.

inline Tensor slice_channels(const Tensor& x, long from, long count) {
  const Shape xs = x.shape();
  require(!x.is_complex(), "slice_channels: real input");
  require(from >= 0 && count >= 1 && from + count <= xs.c, "slice out of range");
  auto xn = x.node();
  Shape os{xs.b, count, xs.t};
  Tensor out = detail::make_result(
      os, false, {xn}, [xn, xs, from, count](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long b = 0; b < xs.b; ++b)
          for (long c = 0; c < count; ++c) {
            const double* g = self.grad.data() + (b * count + c) * xs.t;
            double* gx = xn->grad.data() + (b * xs.c + from + c) * xs.t;
            for (long t = 0; t < xs.t; ++t) gx[t] += g[t];
          }
      });
  for (long b = 0; b < xs.b; ++b)
    for (long c = 0; c < count; ++c)
      std::copy(x.data() + (b * xs.c + from + c) * xs.t,
                x.data() + (b * xs.c + from + c + 1) * xs.t,
                out.data() + (b * count + c) * xs.t);
  return out;
}

inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: empty input");
  const Shape first = parts.front().shape();
  long total_c = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    require(p.shape().b == first.b && p.shape().t == first.t && !p.is_complex(),
            "concat_channels: incompatible parts");
    total_c += p.shape().c;
    parents.push_back(p.node());
  }
  Shape os{first.b, total_c, first.t};
  auto parents_copy = parents;
  Tensor out = detail::make_result(
      os, false, std::move(parents), [parents = std::move(parents_copy), os](Node& self) {
        long offset = 0;
        for (const auto& pn : parents) {
          const long pc = pn->shape.c;
          if (pn->requires_grad) {
            pn->ensure_grad();
            for (long b = 0; b < os.b; ++b)
              for (long c = 0; c < pc; ++c) {
                const double* g = self.grad.data() + (b * os.c + offset + c) * os.t;
                double* gp = pn->grad.data() + (b * pc + c) * os.t;
                for (long t = 0; t < os.t; ++t) gp[t] += g[t];
              }
          }
          offset += pc;
        }
      });
  long offset = 0;
  for (const auto& p : parts) {
    const long pc = p.shape().c;
    for (long b = 0; b < os.b; ++b)
      for (long c = 0; c < pc; ++c)
        std::copy(p.data() + (b * pc + c) * os.t, p.data() + (b * pc + c + 1) * os.t,
                  out.data() + (b * os.c + offset + c) * os.t);
    offset += pc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-channel affine map with constant coefficients (z-scoring on the tape).

inline Tensor affine_channels(const Tensor& x, const Eigen::VectorXd& scale_v,
                              const Eigen::VectorXd& shift_v) {
  const Shape xs = x.shape();
  require(!x.is_complex(), "affine_channels: real input");
  require(scale_v.size() == xs.c && shift_v.size() == xs.c,
          "affine_channels: coefficient size mismatch");
  auto xn = x.node();
  Tensor out = detail::make_result(
      xs, false, {xn}, [xn, xs, scale_v](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long b = 0; b < xs.b; ++b)
          for (long c = 0; c < xs.c; ++c) {
            const double s = scale_v[c];
            const double* g = self.grad.data() + (b * xs.c + c) * xs.t;
            double* gx = xn->grad.data() + (b * xs.c + c) * xs.t;
            for (long t = 0; t < xs.t; ++t) gx[t] += s * g[t];
          }
      });
  for (long b = 0; b < xs.b; ++b)
    for (long c = 0; c < xs.c; ++c) {
      const double s = scale_v[c], m = shift_v[c];
      const double* xv = x.data() + (b * xs.c + c) * xs.t;
      double* y = out.data() + (b * xs.c + c) * xs.t;
      for (long t = 0; t < xs.t; ++t) y[t] = s * xv[t] + m;
    }
  return out;
}

// Per-(sample, channel) constant multipliers / offsets.
inline Tensor scale_rows(const Tensor& x, const Eigen::MatrixXd& mult) {
  const Shape xs = x.shape();
  require(mult.rows() == xs.b && mult.cols() == xs.c, "scale_rows: size mismatch");
  auto xn = x.node();
  Eigen::MatrixXd m = mult;
  Tensor out = detail::make_result(
      xs, false, {xn}, [xn, xs, m](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long b = 0; b < xs.b; ++b)
          for (long c = 0; c < xs.c; ++c) {
            const double s = m(b, c);
            const double* g = self.grad.data() + (b * xs.c + c) * xs.t;
            double* gx = xn->grad.data() + (b * xs.c + c) * xs.t;
            for (long t = 0; t < xs.t; ++t) gx[t] += s * g[t];
          }
      });
  for (long b = 0; b < xs.b; ++b)
    for (long c = 0; c < xs.c; ++c) {
      const double s = mult(b, c);
      const double* xv = x.data() + (b * xs.c + c) * xs.t;
      double* y = out.data() + (b * xs.c + c) * xs.t;
      for (long t = 0; t < xs.t; ++t) y[t] = s * xv[t];
    }
  return out;
}

inline Tensor add_rows(const Tensor& x, const Eigen::MatrixXd& offs) {
  const Shape xs = x.shape();
  require(offs.rows() == xs.b && offs.cols() == xs.c, "add_rows: size mismatch");
  auto xn = x.node();
  Tensor out = detail::make_result(
      xs, false, {xn}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const long n = self.buffer_size();
        for (long i = 0; i < n; ++i)
          xn->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
      });
  for (long b = 0; b < xs.b; ++b)
    for (long c = 0; c < xs.c; ++c) {
      const double o = offs(b, c);
      const double* xv = x.data() + (b * xs.c + c) * xs.t;
      double* y = out.data() + (b * xs.c + c) * xs.t;
      for (long t = 0; t < xs.t; ++t) y[t] = xv[t] + o;
    }
  return out;
}

// max(x, 0)^p with subgradient 0 at x <= 0 (power-law contact on the tape).
inline Tensor relu_pow(const Tensor& x, double p) {
  require(!x.is_complex() && p > 0.0, "relu_pow: real input, positive exponent");
  auto xn = x.node();
  Tensor out = detail::make_result(
      x.shape(), false, {xn}, [xn, p](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const long n = self.buffer_size();
        for (long i = 0; i < n; ++i) {
          double xv = xn->value[static_cast<std::size_t>(i)];
          if (xv <= 0.0) continue;
          double d = p == 1.5 ? 1.5 * std::sqrt(xv) : p * std::pow(xv, p - 1.0);
          xn->grad[static_cast<std::size_t>(i)] += d * self.grad[static_cast<std::size_t>(i)];
        }
      });
  const long n = out.size();
  for (long i = 0; i < n; ++i) {
    double xv = x.data()[i];
    out.data()[i] =
        xv <= 0.0 ? 0.0 : (p == 1.5 ? xv * std::sqrt(xv) : std::pow(xv, p));
  }
  return out;
}

// Per-sample constant linear map over channels: out[b,:,t] = A_b in[b,:,t].
inline Tensor linear_map_per_sample(const Tensor& x,
                                    const std::vector<Eigen::MatrixXd>& A) {
  const Shape xs = x.shape();
  require(static_cast<long>(A.size()) == xs.b, "linear_map_per_sample: batch mismatch");
  const long rows = A.front().rows();
  for (const auto& m : A)
    require(m.rows() == rows && m.cols() == xs.c, "linear_map_per_sample: bad matrix");
  auto xn = x.node();
  auto Acopy = std::make_shared<std::vector<Eigen::MatrixXd>>(A);
  Shape os{xs.b, rows, xs.t};
  Tensor out = detail::make_result(
      os, false, {xn}, [xn, xs, rows, Acopy](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long b = 0; b < xs.b; ++b) {
          detail::MapRowC G(self.grad.data() + b * rows * xs.t, rows, xs.t);
          detail::MapRow GX(xn->grad.data() + b * xs.c * xs.t, xs.c, xs.t);
          GX.noalias() += (*Acopy)[static_cast<std::size_t>(b)].transpose() * G;
        }
      });
  for (long b = 0; b < xs.b; ++b) {
    detail::MapRowC X(x.data() + b * xs.c * xs.t, xs.c, xs.t);
    detail::MapRow O(out.data() + b * rows * xs.t, rows, xs.t);
    O.noalias() = A[static_cast<std::size_t>(b)] * X;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.

// Sum of squared components; for complex tensors this is sum |z|^2.
inline Tensor sum_abs2(const Tensor& x) {
  auto xn = x.node();
  Tensor out = detail::make_result(
      {1, 1, 1}, false, {xn}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = 2.0 * self.grad[0];
        const long n = xn->buffer_size();
        for (long i = 0; i < n; ++i)
          xn->grad[static_cast<std::size_t>(i)] += g * xn->value[static_cast<std::size_t>(i)];
      });
  double s = 0.0;
  const long n = x.size();
  for (long i = 0; i < n; ++i) s += x.data()[i] * x.data()[i];
  out.data()[0] = s;
  return out;
}

inline Tensor sum_all(const Tensor& x) {
  require(!x.is_complex(), "sum_all: real input");
  auto xn = x.node();
  Tensor out = detail::make_result(
      {1, 1, 1}, false, {xn}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = self.grad[0];
        const long n = xn->buffer_size();
        for (long i = 0; i < n; ++i) xn->grad[static_cast<std::size_t>(i)] += g;
      });
  double s = 0.0;
  const long n = x.size();
  for (long i = 0; i < n; ++i) s += x.data()[i];
  out.data()[0] = s;
  return out;
}

inline Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.shape().elems()));
}

// sum_{b,c} sum_t w_t x^2 / (B*C): the shared quadratic reduction behind the
// data and derivative losses (w holds trapezoid weights, zeroed where
// trimmed).
inline Tensor weighted_sq_mean(const Tensor& x, const Eigen::VectorXd& w) {
  const Shape xs = x.shape();
  require(!x.is_complex() && w.size() == xs.t, "weighted_sq_mean: bad weights");
  auto xn = x.node();
  const double norm = 1.0 / static_cast<double>(xs.b * xs.c);
  Eigen::VectorXd wv = w;
  Tensor out = detail::make_result(
      {1, 1, 1}, false, {xn}, [xn, xs, wv, norm](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = self.grad[0] * norm * 2.0;
        const long rows = xs.rows();
        for (long r = 0; r < rows; ++r) {
          const double* xv = xn->value.data() + r * xs.t;
          double* gx = xn->grad.data() + r * xs.t;
          for (long t = 0; t < xs.t; ++t) gx[t] += g * wv[t] * xv[t];
        }
      });
  double acc = 0.0;
  const long rows = xs.rows();
  for (long r = 0; r < rows; ++r) {
    const double* xv = x.data() + r * xs.t;
    for (long t = 0; t < xs.t; ++t) acc += w[t] * xv[t] * xv[t];
  }
  out.data()[0] = acc * norm;
  return out;
}

// ---------------------------------------------------------------------------
// Backward pass.

inline void backward(Tensor loss) {
  require(loss.shape().elems() == 1 && !loss.is_complex(),
          "backward: loss must be a real scalar");
  require(loss.requires_grad(), "backward: loss does not depend on any parameter");

  // post-order over the parent DAG
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && !seen.count(p) && p->backward_fn) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      } else if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);  // leaf parameter: grads accumulate, nothing to expand
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
  // release the graph; leaf grads survive
  for (Node* n : order) {
    n->parents.clear();
    n->backward_fn = nullptr;
  }
}

inline void zero_grad(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace vtlab::ad
