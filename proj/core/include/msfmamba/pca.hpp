#pragma once

#include "msfmamba/tensor.hpp"

namespace msf {

struct PcaModel {
  Tensor<double> mean;                // [Bands]
  Tensor<double> basis;               // [Bands, Np], orthonormal columns
  Tensor<double> explained_variance;  // [Np], nonincreasing

  std::size_t bands() const { return mean.dim(0); }
  std::size_t components() const { return basis.dim(1); }
};

/// Principal axes of the mean-centered covariance of `pixels` [M, Bands],
/// ordered by descending eigenvalue. Each axis is signed so that its
/// largest-magnitude entry is positive. Requires M > n_components.
PcaModel pca_fit(const Tensor<double>& pixels, std::size_t n_components);

/// (cube - mean) * basis per pixel: [H, W, Bands] -> [H, W, Np].
Tensor<double> pca_apply(const PcaModel& model, const Tensor<double>& cube);

}  // namespace msf
