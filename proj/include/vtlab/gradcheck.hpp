#pragma once

// Central finite-difference gradient verification. For each parameter tensor
// the analytic gradient from one backward pass is compared against
// (f(p+h) - f(p-h)) / 2h componentwise; the error is normalized by the
// largest gradient magnitude in that tensor so near-zero components do not
// produce spurious blowups.

#include <functional>
#include <vector>

#include "vtlab/tensor.hpp"

namespace vtlab {

struct GradcheckResult {
  double max_rel_error = 0.0;
  long checked = 0;
};

inline GradcheckResult gradcheck(const std::function<ad::Tensor()>& loss_fn,
                                 std::vector<ad::Tensor> params, double h = 1e-5,
                                 long max_per_tensor = 4096) {
  // analytic pass
  for (auto& p : params) p.zero_grad();
  ad::Tensor loss = loss_fn();
  ad::backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    std::vector<double> g(static_cast<std::size_t>(p.size()), 0.0);
    if (p.has_grad())
      std::copy(p.grad_data(), p.grad_data() + p.size(), g.begin());
    analytic.push_back(std::move(g));
  }

  GradcheckResult result;
  ad::NoGradGuard ng;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    double gscale = 0.0;
    for (double g : analytic[pi]) gscale = std::max(gscale, std::abs(g));
    const long n = p.size();
    const long stride = std::max<long>(1, n / max_per_tensor);
    for (long i = 0; i < n; i += stride) {
      double saved = p.data()[i];
      p.data()[i] = saved + h;
      double fp = loss_fn().item();
      p.data()[i] = saved - h;
      double fm = loss_fn().item();
      p.data()[i] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double err = std::abs(fd - analytic[pi][static_cast<std::size_t>(i)]) /
                   std::max(gscale, 1e-10);
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace vtlab
