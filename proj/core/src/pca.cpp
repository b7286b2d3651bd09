#include "msfmamba/pca.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace msf {

PcaModel pca_fit(const Tensor<double>& pixels, std::size_t n_components) {
  if (pixels.rank() != 2) throw DimensionError("pca_fit: pixels must be [M, Bands]");
  const std::size_t M = pixels.dim(0), B = pixels.dim(1);
  if (n_components == 0 || n_components > B) {
    throw ConfigError("pca_fit: component count must be in 1.." + std::to_string(B));
  }
  if (M <= n_components) {
    throw ContractError("pca_fit: insufficient data, " + std::to_string(M) + " samples for " +
                        std::to_string(n_components) + " components");
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> X(pixels.data().data(), static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(B));
  const Eigen::VectorXd mu = X.colwise().mean().transpose();
  const RowMat centered = X.rowwise() - mu.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(M - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");

  PcaModel model;
  model.mean = Tensor<double>(Shape{B});
  for (std::size_t b = 0; b < B; ++b) model.mean[b] = mu(static_cast<Eigen::Index>(b));
  model.basis = Tensor<double>(Shape{B, n_components});
  model.explained_variance = Tensor<double>(Shape{n_components});
  // Eigen returns ascending eigenvalues.
  for (std::size_t k = 0; k < n_components; ++k) {
    const auto col = static_cast<Eigen::Index>(B - 1 - k);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (std::size_t b = 0; b < B; ++b) model.basis.at(b, k) = v(static_cast<Eigen::Index>(b));
    model.explained_variance[k] = std::max(0.0, solver.eigenvalues()(col));
  }
  return model;
}

Tensor<double> pca_apply(const PcaModel& model, const Tensor<double>& cube) {
  if (cube.rank() != 3 || cube.dim(2) != model.bands()) {
    throw DimensionError("pca_apply: cube " + shape_to_string(cube.shape()) + " vs " +
                         std::to_string(model.bands()) + " bands");
  }
  const std::size_t H = cube.dim(0), W = cube.dim(1), B = model.bands(), K = model.components();
  Tensor<double> out(Shape{H, W, K});
  std::vector<double> centered(B);
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t b = 0; b < B; ++b) centered[b] = cube[p * B + b] - model.mean[b];
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0;
      for (std::size_t b = 0; b < B; ++b) acc += centered[b] * model.basis[b * K + k];
      out[p * K + k] = acc;
    }
  }
  return out;
}

}  // namespace msf
