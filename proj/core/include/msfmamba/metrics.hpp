#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace msf {

/// Confusion matrix (rows = truth, columns = prediction) with OA, AA and Kappa.
struct Metrics {
  std::size_t classes = 0;
  std::vector<std::uint64_t> confusion;  // row-major [classes x classes]
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;

  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return confusion[truth * classes + predicted]; }
  std::uint64_t total() const;
};

/// Derives OA = trace/total, AA = mean recall over rows with nonzero support,
/// Kappa = (p_o - p_e) / (1 - p_e) with p_e = sum_k row_k col_k / total^2.
/// Kappa is defined as 1 when p_e == 1 and the matrix is perfectly diagonal.
Metrics metrics_from_confusion(std::size_t classes, std::vector<std::uint64_t> confusion);

Metrics metrics_from_predictions(std::size_t classes, const std::vector<std::size_t>& truth,
                                 const std::vector<std::size_t>& predicted);

}  // namespace msf
