#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "msfmamba/config.hpp"
#include "msfmamba/rng.hpp"
#include "msfmamba/weights.hpp"

namespace msf::model {

// Weight initialization. Every block has its own initializer so tests can
// build a single block in isolation.

template <typename T>
void init_linear(WeightStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
                 Rng& rng);

template <typename T>
void init_dwconv(WeightStore<T>& store, const std::string& prefix, std::size_t channels, Rng& rng);

template <typename T>
void init_layer_norm(WeightStore<T>& store, const std::string& prefix, std::size_t channels);

/// A[c, n] = -(n + 1) (or seeded random negative), D = 1, softplus(b_dt) uniform in [1e-3, 1e-1].
template <typename T>
void init_ssm(WeightStore<T>& store, const std::string& prefix, std::size_t width, std::size_t states, AInit a_init,
              Rng& rng);

template <typename T>
void init_mspa_block(WeightStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng);

/// `spatial` is H*W of the maps the block will see: it is the token width of the spectral scan.
template <typename T>
void init_spe_block(WeightStore<T>& store, const std::string& prefix, const ModelConfig& cfg, std::size_t spatial,
                    Rng& rng);

template <typename T>
void init_fus_block(WeightStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng);

template <typename T>
WeightStore<T> init_weights(const ModelConfig& cfg, std::uint64_t seed);

// Blocks. All spatial blocks map [H, W, C] -> [H, W, C].

/// Multi-scale spatial SSM. The first (routes - down_paths) canonical routes scan
/// a stride-1 DWConv of the input, the rest scan a stride-2 DWConv; the
/// downsampled route outputs are summed and interpolated back before merging.
template <typename T>
Var<T> mspa_ssm(const Var<T>& x, const Weights<T>& w, const std::string& prefix, const ModelConfig& cfg);

/// Linear(LN(MSpa-SSM(SiLU(DWConv(Linear(X))))) * SiLU(Linear(X)))
template <typename T>
Var<T> mspa_mamba_block(const Var<T>& x, const Weights<T>& w, const std::string& prefix, const ModelConfig& cfg);

/// Gated block whose SSM runs along the channel axis, forward and reverse.
template <typename T>
Var<T> spe_mamba_block(const Var<T>& x, const Weights<T>& w, const std::string& prefix);

/// Cross-modal block around fus_ssm over row-major flattened sequences.
template <typename T>
std::pair<Var<T>, Var<T>> fus_mamba_block(const Var<T>& f_h, const Var<T>& f_x, const Weights<T>& w,
                                          const std::string& prefix);

template <typename T>
std::pair<Var<T>, Var<T>> ss_mamba_module(const Var<T>& h_in, const Var<T>& x_in, const Weights<T>& w,
                                          std::size_t index, const ModelConfig& cfg);

/// Stems plus all L modules; returns the final (F'_h, F'_x) feature maps.
template <typename T>
std::pair<Var<T>, Var<T>> features(const Var<T>& hsi_patch, const Var<T>& aux_patch, const Weights<T>& w,
                                   const ModelConfig& cfg);

/// Raw class logits for one sample.
template <typename T>
Var<T> forward(const Var<T>& hsi_patch, const Var<T>& aux_patch, const Weights<T>& w, const ModelConfig& cfg);

/// Exact learnable-scalar count, from the closed form below.
///   linear(i, o)  = i*o + o        dwconv(C) = 10C       layernorm(C) = 2C
///   ssm(w, N)     = 3wN + w^2 + 2w
///   mspa          = 3 linear(C, C) + (1 + [full routes] + [down routes]) dwconv(C) + layernorm(C)
///                   + (share ? 1 : routes) ssm(C, N)
///   spe           = 3 linear(C, C) + dwconv(C) + layernorm(C) + 2 ssm(patch^2, N)
///   fus           = 2 (3 linear(C, C) + dwconv(C) + layernorm(C)) + 2 ssm(C, N)
///   total         = (Np + aux) C + L (2 mspa + spe? + fus?) + linear(2C, C) + linear(C, classes)
std::size_t param_count(const ModelConfig& cfg);

/// Forward FLOPs for one patch: multiply-accumulates count 2, the scan is
/// counted at its sequential cost (3 FLOPs per state update plus 2 per readout term).
double flop_estimate(const ModelConfig& cfg);

}  // namespace msf::model
