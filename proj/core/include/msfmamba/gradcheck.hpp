#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msfmamba/autodiff.hpp"

namespace msf {

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t components = 0;
  // Input index and flat element of the worst component.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients of a scalar `f` against central differences,
/// componentwise, with relative error |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double step = 1e-5,
                           double tol = 1e-4);

GradCheckReport grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
                           double step = 1e-5, double tol = 1e-4);

std::string describe(const GradCheckReport& report);

}  // namespace msf
