#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msfmamba/config.hpp"
#include "msfmamba/weights.hpp"

namespace msf {

/// Effective receptive field of one output position.
struct ErfResult {
  Tensor<double> map;  // [H, W], normalized so the largest entry is 1 (all zero if the gradient vanishes)
  std::size_t support = 0;
  double support_fraction = 0.0;
  double threshold = 0.0;
};

/// Maps inputs [H, W, *] to an output [H', W', C'].
using SpatialFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// |d mean_c out[H'/2, W'/2, c] / d input|, summed over channels and over all
/// inputs (they must share H and W), then normalized to max 1. Positions whose
/// normalized magnitude exceeds `threshold` count as support.
ErfResult erf_map(const SpatialFn& f, const std::vector<Tensor<double>>& inputs, double threshold = 1e-6);

enum class ErfTarget { Model, MspaBlock, DwConv };

ErfTarget parse_erf_target(const std::string& name);
std::string erf_target_name(ErfTarget target);

/// ERF of the model's last module output (F'_h + F'_x) w.r.t. both input patches.
ErfResult erf_model(const WeightStore<double>& weights, const ModelConfig& cfg, const Tensor<double>& hsi_patch,
                    const Tensor<double>& aux_patch);

/// ERF with seeded random weights and a seeded random patch of size cfg.patch.
/// MspaBlock and DwConv build a single block of width cfg.C.
ErfResult erf_random(ErfTarget target, const ModelConfig& cfg, std::uint64_t seed);

/// `support=.. fraction=.. threshold=..` followed by the map, one row per line.
std::string erf_summary(const ErfResult& result);

}  // namespace msf
