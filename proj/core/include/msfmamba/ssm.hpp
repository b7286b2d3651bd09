#pragma once

#include <cstddef>
#include <utility>

#include "msfmamba/autodiff.hpp"

namespace msf {

/// Learnable parameters of one selective-scan unit over C channels and N states.
///   A    [C, N]  continuous state matrix, diagonal per channel
///   D    [C]     skip term
///   W_B  [C, N], W_C [C, N]  selection projections for B and C
///   W_dt [C, C], b_dt [C]    selection projection for the timescale
template <typename T>
struct SsmParams {
  Var<T> A;
  Var<T> D;
  Var<T> W_B;
  Var<T> W_C;
  Var<T> W_dt;
  Var<T> b_dt;

  std::size_t channels() const { return A.dim(0); }
  std::size_t states() const { return A.dim(1); }
};

/// Input-dependent parameters for a sequence of length P.
template <typename T>
struct SelectedParams {
  Var<T> B;      // [P, N]
  Var<T> C;      // [P, N]
  Var<T> delta;  // [P, C], strictly positive
};

template <typename T>
struct DiscreteParams {
  Var<T> a_bar;  // [P, C, N] = exp(delta (x) A)
  Var<T> b_bar;  // [P, C, N] = delta (x) B
};

/// B = seq W_B, C = seq W_C, delta = softplus(seq W_dt + b_dt).
template <typename T>
SelectedParams<T> select_parameters(const Var<T>& seq, const SsmParams<T>& params);

/// Zero-order-hold discretization with the first-order approximation for B.
/// Throws ContractError if any delta is not strictly positive.
template <typename T>
DiscreteParams<T> discretize(const Var<T>& delta, const Var<T>& A, const Var<T>& B);

/// Differentiable recurrence with h_0 = 0:
///   h[p] = a_bar[p] h[p-1] + b_bar[p] x[p]
///   y[p, c] = sum_n C[p, n] h[p, c, n] + D[c] x[p, c]
template <typename T>
Var<T> scan_sequential(const DiscreteParams<T>& dp, const Var<T>& c_mat, const Var<T>& D, const Var<T>& x);

/// Forward-only reference recurrence on plain tensors.
template <typename T>
Tensor<T> scan_sequential(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat,
                          const Tensor<T>& D, const Tensor<T>& x);

/// Same result as scan_sequential, computed blockwise through the associative
/// composition (a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2). Chunk-local scans run on
/// up to `threads` threads; carries are combined in fixed chunk order, so the
/// result does not depend on the thread count.
template <typename T>
Tensor<T> scan_chunked(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat, const Tensor<T>& D,
                       const Tensor<T>& x, std::size_t chunk, std::size_t threads = 1);

/// Scan `seq` [P, C] with parameters selected from `conditioning` [P, C].
template <typename T>
Var<T> ssm_conditioned(const Var<T>& seq, const Var<T>& conditioning, const SsmParams<T>& params);

/// Selective scan of a sequence conditioned on itself.
template <typename T>
Var<T> ssm_self(const Var<T>& seq, const SsmParams<T>& params);

/// Dual-input scan. F_ho scans F_h with B, C, delta selected from F_x using
/// params_h (whose A and D belong to the F_h branch); F_xo mirrors it.
template <typename T>
std::pair<Var<T>, Var<T>> fus_ssm(const Var<T>& f_h, const Var<T>& f_x, const SsmParams<T>& params_h,
                                  const SsmParams<T>& params_x);

}  // namespace msf
