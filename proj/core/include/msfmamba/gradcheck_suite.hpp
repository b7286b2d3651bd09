#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msfmamba/gradcheck.hpp"

namespace msf {

struct GradSuiteEntry {
  std::string name;
  double tol = 0.0;
  GradCheckReport report;
};

/// Finite-difference checks over every differentiable primitive, the scan
/// kernels, each block and the full model (float64). Entries whose name does
/// not contain `filter` are skipped. `progress`, if set, sees each entry as it
/// finishes.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, const std::string& filter = "",
                                           const std::function<void(const GradSuiteEntry&)>& progress = {});

/// Names of every entry, in run order.
std::vector<std::string> grad_suite_names();

}  // namespace msf
