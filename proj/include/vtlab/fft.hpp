#pragma once

// Thin FFTW3 wrapper: cached 1-D real<->halfcomplex plans, executed on
// arbitrary rows via the new-array interface. Plans are created with
// FFTW_ESTIMATE | FFTW_UNALIGNED so the planner choice (and therefore the
// floating-point result) is reproducible and alignment-agnostic.
//
// Conventions: forward r2c is unnormalized; c2r carries no 1/n either, so
// callers scale explicitly.

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>

#include "vtlab/common.hpp"

namespace vtlab::fft {

class Plans {
 public:
  static Plans& instance() {
    static Plans p;
    return p;
  }

  fftw_plan forward(int n) {
    std::scoped_lock lock(mu_);
    auto it = fwd_.find(n);
    if (it != fwd_.end()) return it->second;
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n) / 2 + 1);
    fftw_plan p = fftw_plan_dft_r2c_1d(
        n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    require(p != nullptr, "fftw r2c planning failed");
    fwd_[n] = p;
    return p;
  }

  fftw_plan inverse(int n) {
    std::scoped_lock lock(mu_);
    auto it = inv_.find(n);
    if (it != inv_.end()) return it->second;
    std::vector<std::complex<double>> in(static_cast<std::size_t>(n) / 2 + 1);
    std::vector<double> out(static_cast<std::size_t>(n));
    fftw_plan p = fftw_plan_dft_c2r_1d(
        n, reinterpret_cast<fftw_complex*>(in.data()), out.data(),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    require(p != nullptr, "fftw c2r planning failed");
    inv_[n] = p;
    return p;
  }

 private:
  Plans() = default;
  std::mutex mu_;
  std::map<int, fftw_plan> fwd_, inv_;
};

// Plan handles for hot loops: look up once, execute per row without
// touching the cache mutex again.
inline fftw_plan forward_plan(int n) { return Plans::instance().forward(n); }
inline fftw_plan inverse_plan(int n) { return Plans::instance().inverse(n); }

inline void exec_r2c(fftw_plan p, const double* in, std::complex<double>* out) {
  fftw_execute_dft_r2c(p, const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

inline void exec_c2r(fftw_plan p, std::complex<double>* in, double* out) {
  fftw_execute_dft_c2r(p, reinterpret_cast<fftw_complex*>(in), out);
}

// out[k] = sum_j in[j] e^{-2 pi i jk/n}, k = 0..n/2.
inline void r2c(const double* in, std::complex<double>* out, int n) {
  exec_r2c(forward_plan(n), in, out);
}

// out[j] = sum_k spectrum-extension, unnormalized; clobbers `in`.
inline void c2r_destructive(std::complex<double>* in, double* out, int n) {
  exec_c2r(inverse_plan(n), in, out);
}

}  // namespace vtlab::fft
