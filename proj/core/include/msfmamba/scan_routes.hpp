#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "msfmamba/autodiff.hpp"

namespace msf {

/// 2D traversal orders. The first four are the row/column scans and their
/// reversals; the diagonal pair is only used by the six-route configuration.
enum class RouteId { RowForward, ColForward, RowReverse, ColReverse, DiagForward, AntiDiagForward };

inline constexpr std::array<RouteId, 6> kCanonicalRoutes = {
    RouteId::RowForward, RouteId::ColForward,  RouteId::RowReverse,
    RouteId::ColReverse, RouteId::DiagForward, RouteId::AntiDiagForward};

std::string_view route_name(RouteId route);

/// perm[k] is the row-major spatial index visited at sequence step k.
/// Cached per (height, width, route); safe for concurrent callers.
const std::vector<std::size_t>& route_permutation(std::size_t height, std::size_t width, RouteId route);

/// Inverse of route_permutation: inv[perm[k]] == k.
const std::vector<std::size_t>& route_inverse(std::size_t height, std::size_t width, RouteId route);

/// X[H, W, C] -> [H*W, C] in route order.
template <typename T>
Tensor<T> sigma(const Tensor<T>& x, RouteId route);

/// [H*W, C] in route order -> [H, W, C].
template <typename T>
Tensor<T> beta(const Tensor<T>& seq, RouteId route, std::size_t height, std::size_t width);

template <typename T>
Var<T> sigma(const Var<T>& x, RouteId route);

template <typename T>
Var<T> beta(const Var<T>& seq, RouteId route, std::size_t height, std::size_t width);

enum class SpectralDirection { Forward, Reverse };

/// X[H, W, C] -> [C, H*W]: the channel axis becomes the sequence axis and each
/// step carries the flattened spatial map. Reverse flips the channel order.
template <typename T>
Var<T> spectral_flatten(const Var<T>& x, SpectralDirection direction);

template <typename T>
Var<T> spectral_unflatten(const Var<T>& seq, SpectralDirection direction, std::size_t height, std::size_t width);

}  // namespace msf
