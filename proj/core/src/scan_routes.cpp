#include "msfmamba/scan_routes.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <shared_mutex>
#include <tuple>

#include "msfmamba/ops.hpp"

namespace msf {

namespace {

struct RouteTables {
  std::vector<std::size_t> perm;
  std::vector<std::size_t> inverse;
};

std::vector<std::size_t> build_permutation(std::size_t H, std::size_t W, RouteId route) {
  std::vector<std::size_t> perm;
  perm.reserve(H * W);
  switch (route) {
    case RouteId::RowForward:
    case RouteId::RowReverse:
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) perm.push_back(i * W + j);
      break;
    case RouteId::ColForward:
    case RouteId::ColReverse:
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t i = 0; i < H; ++i) perm.push_back(i * W + j);
      break;
    case RouteId::DiagForward:
    case RouteId::AntiDiagForward:
      // Diagonals i + j = s in increasing s, rows increasing within a diagonal.
      // The anti-diagonal route is the same walk on the column-mirrored grid.
      for (std::size_t s = 0; s + 1 < H + W; ++s) {
        for (std::size_t i = 0; i < H; ++i) {
          if (s < i || s - i >= W) continue;
          const std::size_t j = s - i;
          perm.push_back(i * W + (route == RouteId::DiagForward ? j : W - 1 - j));
        }
      }
      break;
  }
  if (route == RouteId::RowReverse || route == RouteId::ColReverse) std::reverse(perm.begin(), perm.end());
  return perm;
}

const RouteTables& tables(std::size_t H, std::size_t W, RouteId route) {
  if (H == 0 || W == 0) throw DimensionError("scan route over an empty grid");
  static std::shared_mutex mutex;
  static std::map<std::tuple<std::size_t, std::size_t, RouteId>, std::unique_ptr<RouteTables>> cache;
  const auto key = std::make_tuple(H, W, route);
  {
    std::shared_lock lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return *it->second;
  }
  auto entry = std::make_unique<RouteTables>();
  entry->perm = build_permutation(H, W, route);
  entry->inverse.resize(entry->perm.size());
  for (std::size_t k = 0; k < entry->perm.size(); ++k) entry->inverse[entry->perm[k]] = k;
  std::unique_lock lock(mutex);
  auto [it, inserted] = cache.emplace(key, std::move(entry));
  return *it->second;
}

std::vector<std::size_t> reversed_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = n - 1 - i;
  return idx;
}

}  // namespace

std::string_view route_name(RouteId route) {
  switch (route) {
    case RouteId::RowForward: return "RowForward";
    case RouteId::ColForward: return "ColForward";
    case RouteId::RowReverse: return "RowReverse";
    case RouteId::ColReverse: return "ColReverse";
    case RouteId::DiagForward: return "DiagForward";
    case RouteId::AntiDiagForward: return "AntiDiagForward";
  }
  return "?";
}

const std::vector<std::size_t>& route_permutation(std::size_t height, std::size_t width, RouteId route) {
  return tables(height, width, route).perm;
}

const std::vector<std::size_t>& route_inverse(std::size_t height, std::size_t width, RouteId route) {
  return tables(height, width, route).inverse;
}

template <typename T>
Tensor<T> sigma(const Tensor<T>& x, RouteId route) {
  if (x.rank() != 3) throw DimensionError("sigma: input must be [H,W,C]");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const auto& perm = route_permutation(H, W, route);
  Tensor<T> out(Shape{H * W, C});
  for (std::size_t k = 0; k < perm.size(); ++k) std::copy_n(&x[perm[k] * C], C, &out[k * C]);
  return out;
}

template <typename T>
Tensor<T> beta(const Tensor<T>& seq, RouteId route, std::size_t height, std::size_t width) {
  if (seq.rank() != 2 || seq.dim(0) != height * width) {
    throw DimensionError("beta: sequence " + shape_to_string(seq.shape()) + " does not hold a " +
                         std::to_string(height) + "x" + std::to_string(width) + " map");
  }
  const std::size_t C = seq.dim(1);
  const auto& perm = route_permutation(height, width, route);
  Tensor<T> out(Shape{height, width, C});
  for (std::size_t k = 0; k < perm.size(); ++k) std::copy_n(&seq[k * C], C, &out[perm[k] * C]);
  return out;
}

template <typename T>
Var<T> sigma(const Var<T>& x, RouteId route) {
  if (x.value().rank() != 3) throw DimensionError("sigma: input must be [H,W,C]");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  auto flat = reshape(x, Shape{H * W, C});
  if (route == RouteId::RowForward) return flat;
  return gather_rows(flat, route_permutation(H, W, route));
}

template <typename T>
Var<T> beta(const Var<T>& seq, RouteId route, std::size_t height, std::size_t width) {
  if (seq.value().rank() != 2 || seq.dim(0) != height * width) {
    throw DimensionError("beta: sequence " + shape_to_string(seq.shape()) + " does not hold a " +
                         std::to_string(height) + "x" + std::to_string(width) + " map");
  }
  const std::size_t C = seq.dim(1);
  if (route == RouteId::RowForward) return reshape(seq, Shape{height, width, C});
  return reshape(gather_rows(seq, route_inverse(height, width, route)), Shape{height, width, C});
}

template <typename T>
Var<T> spectral_flatten(const Var<T>& x, SpectralDirection direction) {
  if (x.value().rank() != 3) throw DimensionError("spectral_flatten: input must be [H,W,C]");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  auto seq = transpose2d(reshape(x, Shape{H * W, C}));
  if (direction == SpectralDirection::Reverse) seq = gather_rows(seq, reversed_indices(C));
  return seq;
}

template <typename T>
Var<T> spectral_unflatten(const Var<T>& seq, SpectralDirection direction, std::size_t height, std::size_t width) {
  if (seq.value().rank() != 2 || seq.dim(1) != height * width) {
    throw DimensionError("spectral_unflatten: sequence " + shape_to_string(seq.shape()) + " does not hold a " +
                         std::to_string(height) + "x" + std::to_string(width) + " map");
  }
  const std::size_t C = seq.dim(0);
  Var<T> ordered = direction == SpectralDirection::Reverse ? gather_rows(seq, reversed_indices(C)) : seq;
  return reshape(transpose2d(ordered), Shape{height, width, C});
}

#define MSF_INSTANTIATE_ROUTES(T)                                                                    \
  template Tensor<T> sigma(const Tensor<T>&, RouteId);                                               \
  template Tensor<T> beta(const Tensor<T>&, RouteId, std::size_t, std::size_t);                      \
  template Var<T> sigma(const Var<T>&, RouteId);                                                     \
  template Var<T> beta(const Var<T>&, RouteId, std::size_t, std::size_t);                            \
  template Var<T> spectral_flatten(const Var<T>&, SpectralDirection);                                \
  template Var<T> spectral_unflatten(const Var<T>&, SpectralDirection, std::size_t, std::size_t);

MSF_INSTANTIATE_ROUTES(float)
MSF_INSTANTIATE_ROUTES(double)

}  // namespace msf
