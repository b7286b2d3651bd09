#include "msfmamba/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "msfmamba/error.hpp"

namespace msf {

std::uint64_t Metrics::total() const { return std::accumulate(confusion.begin(), confusion.end(), std::uint64_t{0}); }

Metrics metrics_from_confusion(std::size_t classes, std::vector<std::uint64_t> confusion) {
  if (classes == 0 || confusion.size() != classes * classes) {
    throw DimensionError("confusion matrix must be classes x classes");
  }
  Metrics m;
  m.classes = classes;
  m.confusion = std::move(confusion);
  const double total = static_cast<double>(m.total());
  if (total == 0) throw ContractError("metrics over an empty confusion matrix");

  std::vector<double> row(classes, 0.0), col(classes, 0.0);
  double trace = 0;
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      const auto v = static_cast<double>(m.at(i, j));
      row[i] += v;
      col[j] += v;
      if (i == j) trace += v;
    }
  }
  m.oa = trace / total;

  double recall_sum = 0;
  std::size_t supported = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (row[k] == 0) continue;
    recall_sum += static_cast<double>(m.at(k, k)) / row[k];
    ++supported;
  }
  m.aa = recall_sum / static_cast<double>(supported);

  double pe = 0;
  for (std::size_t k = 0; k < classes; ++k) pe += row[k] * col[k];
  pe /= total * total;
  m.kappa = pe < 1.0 ? (m.oa - pe) / (1.0 - pe) : (m.oa == 1.0 ? 1.0 : 0.0);
  return m;
}

Metrics metrics_from_predictions(std::size_t classes, const std::vector<std::size_t>& truth,
                                 const std::vector<std::size_t>& predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("truth and prediction counts differ");
  std::vector<std::uint64_t> confusion(classes * classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || predicted[i] >= classes) {
      throw DimensionError("class id " + std::to_string(std::max(truth[i], predicted[i])) + " out of range");
    }
    ++confusion[truth[i] * classes + predicted[i]];
  }
  return metrics_from_confusion(classes, std::move(confusion));
}

}  // namespace msf
