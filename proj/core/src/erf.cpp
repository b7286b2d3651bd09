#include "msfmamba/erf.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "msfmamba/model.hpp"
#include "msfmamba/ops.hpp"
#include "msfmamba/rng.hpp"

namespace msf {

ErfResult erf_map(const SpatialFn& f, const std::vector<Tensor<double>>& inputs, double threshold) {
  if (inputs.empty()) throw ContractError("erf_map needs at least one input");
  const std::size_t H = inputs[0].dim(0), W = inputs[0].dim(1);
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) {
    if (t.rank() != 3 || t.dim(0) != H || t.dim(1) != W) {
      throw DimensionError("erf_map inputs must be [H, W, *] with equal H and W");
    }
    leaves.push_back(Var<double>::leaf(t));
  }
  const Var<double> out = f(leaves);
  if (out.value().rank() != 3) throw DimensionError("erf_map output must be [H, W, C]");
  const std::size_t oh = out.dim(0), ow = out.dim(1), oc = out.dim(2);
  Tensor<double> seed(out.shape(), 0.0);
  for (std::size_t c = 0; c < oc; ++c) seed.at(oh / 2, ow / 2, c) = 1.0 / static_cast<double>(oc);
  const auto grads = backward(out, seed);

  ErfResult r;
  r.threshold = threshold;
  r.map = Tensor<double>(Shape{H, W}, 0.0);
  for (const auto& leaf : leaves) {
    const auto g = grads.wrt(leaf);
    const std::size_t ch = g.dim(2);
    for (std::size_t p = 0; p < H * W; ++p) {
      for (std::size_t c = 0; c < ch; ++c) r.map[p] += std::abs(g[p * ch + c]);
    }
  }
  const double peak = max_abs(r.map);
  if (peak > 0) {
    for (std::size_t p = 0; p < H * W; ++p) r.map[p] /= peak;
  }
  for (std::size_t p = 0; p < H * W; ++p) {
    if (r.map[p] > threshold) ++r.support;
  }
  r.support_fraction = static_cast<double>(r.support) / static_cast<double>(H * W);
  return r;
}

ErfTarget parse_erf_target(const std::string& name) {
  if (name == "model") return ErfTarget::Model;
  if (name == "mspa") return ErfTarget::MspaBlock;
  if (name == "dwconv") return ErfTarget::DwConv;
  throw ConfigError("erf target must be model, mspa or dwconv, got '" + name + "'");
}

std::string erf_target_name(ErfTarget target) {
  switch (target) {
    case ErfTarget::Model: return "model";
    case ErfTarget::MspaBlock: return "mspa";
    case ErfTarget::DwConv: return "dwconv";
  }
  return "?";
}

ErfResult erf_model(const WeightStore<double>& weights, const ModelConfig& cfg, const Tensor<double>& hsi_patch,
                    const Tensor<double>& aux_patch) {
  const auto w = Weights<double>::constants(weights);
  return erf_map(
      [&](const std::vector<Var<double>>& in) {
        auto [fh, fx] = model::features(in[0], in[1], w, cfg);
        return add(fh, fx);
      },
      {hsi_patch, aux_patch});
}

ErfResult erf_random(ErfTarget target, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const auto P = static_cast<std::size_t>(cfg.patch);
  const auto C = static_cast<std::size_t>(cfg.C);
  switch (target) {
    case ErfTarget::Model: {
      const auto weights = model::init_weights<double>(cfg, seed);
      const auto hsi = rng.normal_tensor<double>(Shape{P, P, static_cast<std::size_t>(cfg.Np)});
      const auto aux = rng.normal_tensor<double>(Shape{P, P, static_cast<std::size_t>(cfg.aux_channels)});
      return erf_model(weights, cfg, hsi, aux);
    }
    case ErfTarget::MspaBlock: {
      WeightStore<double> store;
      model::init_mspa_block(store, "block", cfg, rng);
      const auto w = Weights<double>::constants(store);
      const auto x = rng.normal_tensor<double>(Shape{P, P, C});
      return erf_map([&](const std::vector<Var<double>>& in) { return model::mspa_mamba_block(in[0], w, "block", cfg); },
                     {x});
    }
    case ErfTarget::DwConv: {
      WeightStore<double> store;
      model::init_dwconv(store, "dw", C, rng);
      const auto k = Var<double>::constant(store.at("dw.k"));
      const auto b = Var<double>::constant(store.at("dw.b"));
      const auto x = rng.normal_tensor<double>(Shape{P, P, C});
      return erf_map([&](const std::vector<Var<double>>& in) { return depthwise_conv2d(in[0], k, 1, b); }, {x});
    }
  }
  throw ConfigError("unknown erf target");
}

std::string erf_summary(const ErfResult& r) {
  std::ostringstream os;
  os << "support=" << r.support << " fraction=" << std::setprecision(6) << r.support_fraction
     << " threshold=" << r.threshold << "\n";
  const std::size_t H = r.map.dim(0), W = r.map.dim(1);
  os << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) os << (j ? " " : "") << r.map.at(i, j);
    os << "\n";
  }
  return os.str();
}

}  // namespace msf
