#include "msfmamba/model.hpp"

#include <cmath>

#include "msfmamba/ops.hpp"
#include "msfmamba/scan_routes.hpp"

namespace msf::model {

namespace {

std::string route_prefix(const std::string& prefix, std::size_t r, const ModelConfig& cfg) {
  return cfg.share_route_params ? prefix + ".route_shared" : prefix + ".route" + std::to_string(r);
}

std::size_t full_routes(const ModelConfig& cfg) { return static_cast<std::size_t>(cfg.routes - cfg.down_paths); }

template <typename T>
Var<T> lin(const Var<T>& x, const Weights<T>& w, const std::string& prefix) {
  return linear(x, w[prefix + ".W"], w[prefix + ".b"]);
}

template <typename T>
Var<T> dw(const Var<T>& x, const Weights<T>& w, const std::string& prefix, int stride) {
  return depthwise_conv2d(x, w[prefix + ".k"], stride, w[prefix + ".b"]);
}

template <typename T>
Var<T> ln(const Var<T>& x, const Weights<T>& w, const std::string& prefix) {
  return layer_norm(x, w[prefix + ".gamma"], w[prefix + ".beta"]);
}

template <typename T>
Var<T> accumulate(const Var<T>& total, const Var<T>& term) {
  return total.defined() ? add(total, term) : term;
}

}  // namespace

template <typename T>
void init_linear(WeightStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".W", rng.uniform_tensor<T>(Shape{in, out}, -bound, bound));
  if (bias) store.add(prefix + ".b", Tensor<T>(Shape{out}));
}

template <typename T>
void init_dwconv(WeightStore<T>& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  store.add(prefix + ".k", rng.uniform_tensor<T>(Shape{3, 3, channels}, -1.0 / 3.0, 1.0 / 3.0));
  store.add(prefix + ".b", Tensor<T>(Shape{channels}));
}

template <typename T>
void init_layer_norm(WeightStore<T>& store, const std::string& prefix, std::size_t channels) {
  store.add(prefix + ".gamma", Tensor<T>(Shape{channels}, T(1)));
  store.add(prefix + ".beta", Tensor<T>(Shape{channels}));
}

template <typename T>
void init_ssm(WeightStore<T>& store, const std::string& prefix, std::size_t width, std::size_t states, AInit a_init,
              Rng& rng) {
  Tensor<T> a(Shape{width, states});
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t n = 0; n < states; ++n) {
      a[c * states + n] = a_init == AInit::Fixed ? -static_cast<T>(n + 1)
                                                 : -static_cast<T>(rng.uniform(0.5, static_cast<double>(states)));
    }
  }
  store.add(prefix + ".A", std::move(a));
  store.add(prefix + ".D", Tensor<T>(Shape{width}, T(1)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  store.add(prefix + ".W_B", rng.uniform_tensor<T>(Shape{width, states}, -bound, bound));
  store.add(prefix + ".W_C", rng.uniform_tensor<T>(Shape{width, states}, -bound, bound));
  store.add(prefix + ".W_dt", rng.uniform_tensor<T>(Shape{width, width}, -bound, bound));
  Tensor<T> b_dt(Shape{width});
  for (auto& v : b_dt.data()) {
    // Inverse softplus of a timescale drawn uniformly from [1e-3, 1e-1].
    const double dt = rng.uniform(1e-3, 1e-1);
    v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
  }
  store.add(prefix + ".b_dt", std::move(b_dt));
}

template <typename T>
void init_mspa_block(WeightStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  const auto C = static_cast<std::size_t>(cfg.C);
  const auto N = static_cast<std::size_t>(cfg.N);
  init_linear(store, prefix + ".in_x", C, C, true, rng);
  init_dwconv(store, prefix + ".dw", C, rng);
  if (full_routes(cfg) > 0) init_dwconv(store, prefix + ".ssm.dw1", C, rng);
  if (cfg.down_paths > 0) init_dwconv(store, prefix + ".ssm.dw2", C, rng);
  const std::size_t route_sets = cfg.share_route_params ? 1 : static_cast<std::size_t>(cfg.routes);
  for (std::size_t r = 0; r < route_sets; ++r) init_ssm(store, route_prefix(prefix, r, cfg), C, N, cfg.a_init, rng);
  init_layer_norm(store, prefix + ".ln", C);
  init_linear(store, prefix + ".in_z", C, C, true, rng);
  init_linear(store, prefix + ".out", C, C, true, rng);
}

template <typename T>
void init_spe_block(WeightStore<T>& store, const std::string& prefix, const ModelConfig& cfg, std::size_t spatial,
                    Rng& rng) {
  const auto C = static_cast<std::size_t>(cfg.C);
  const auto N = static_cast<std::size_t>(cfg.N);
  init_linear(store, prefix + ".in_x", C, C, true, rng);
  init_dwconv(store, prefix + ".dw", C, rng);
  init_ssm(store, prefix + ".dir0", spatial, N, cfg.a_init, rng);
  init_ssm(store, prefix + ".dir1", spatial, N, cfg.a_init, rng);
  init_layer_norm(store, prefix + ".ln", C);
  init_linear(store, prefix + ".in_z", C, C, true, rng);
  init_linear(store, prefix + ".out", C, C, true, rng);
}

template <typename T>
void init_fus_block(WeightStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  const auto C = static_cast<std::size_t>(cfg.C);
  const auto N = static_cast<std::size_t>(cfg.N);
  for (const char* m : {"h", "x"}) {
    const std::string p = prefix + "." + m;
    init_linear(store, p + ".in_x", C, C, true, rng);
    init_dwconv(store, p + ".dw", C, rng);
    init_layer_norm(store, p + ".ln", C);
    init_linear(store, p + ".in_z", C, C, true, rng);
    init_linear(store, p + ".out", C, C, true, rng);
  }
  init_ssm(store, prefix + ".ssm_h", C, N, cfg.a_init, rng);
  init_ssm(store, prefix + ".ssm_x", C, N, cfg.a_init, rng);
}

template <typename T>
WeightStore<T> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  WeightStore<T> store;
  const auto C = static_cast<std::size_t>(cfg.C);
  init_linear(store, "stem_h", static_cast<std::size_t>(cfg.Np), C, false, rng);
  init_linear(store, "stem_x", static_cast<std::size_t>(cfg.aux_channels), C, false, rng);
  const auto spatial = static_cast<std::size_t>(cfg.patch * cfg.patch);
  for (int m = 0; m < cfg.L; ++m) {
    const std::string p = "module" + std::to_string(m);
    init_mspa_block(store, p + ".mspa_h", cfg, rng);
    init_mspa_block(store, p + ".mspa_x", cfg, rng);
    if (cfg.use_spe) init_spe_block(store, p + ".spe_h", cfg, spatial, rng);
    if (cfg.use_fus) init_fus_block(store, p + ".fus", cfg, rng);
  }
  init_linear(store, "head.fc1", 2 * C, C, true, rng);
  init_linear(store, "head.fc2", C, static_cast<std::size_t>(cfg.classes), true, rng);
  return store;
}

template <typename T>
Var<T> mspa_ssm(const Var<T>& x, const Weights<T>& w, const std::string& prefix, const ModelConfig& cfg) {
  if (x.value().rank() != 3) throw DimensionError("mspa_ssm: input must be [H,W,C]");
  const std::size_t H = x.dim(0), W = x.dim(1);
  const std::size_t n_full = full_routes(cfg);
  const auto n_routes = static_cast<std::size_t>(cfg.routes);
  if (cfg.down_paths > 0 && (H < 2 || W < 2)) throw ConfigError("mspa_ssm: stride-2 routes need at least 2x2 maps");

  Var<T> full_sum, down_sum;
  if (n_full > 0) {
    const Var<T> z1 = dw(x, w, prefix + ".ssm.dw1", 1);
    for (std::size_t r = 0; r < n_full; ++r) {
      const RouteId route = kCanonicalRoutes[r];
      const Var<T> y = ssm_self(sigma(z1, route), w.ssm(route_prefix(prefix, r, cfg)));
      full_sum = accumulate(full_sum, beta(y, route, H, W));
    }
  }
  if (n_full < n_routes) {
    const Var<T> z2 = dw(x, w, prefix + ".ssm.dw2", 2);
    const std::size_t h2 = z2.dim(0), w2 = z2.dim(1);
    for (std::size_t r = n_full; r < n_routes; ++r) {
      const RouteId route = kCanonicalRoutes[r];
      const Var<T> y = ssm_self(sigma(z2, route), w.ssm(route_prefix(prefix, r, cfg)));
      down_sum = accumulate(down_sum, beta(y, route, h2, w2));
    }
    const Var<T> up = interpolate_up2(down_sum, H, W, cfg.interp);
    return full_sum.defined() ? add(full_sum, up) : up;
  }
  return full_sum;
}

template <typename T>
Var<T> mspa_mamba_block(const Var<T>& x, const Weights<T>& w, const std::string& prefix, const ModelConfig& cfg) {
  const Var<T> u = silu(dw(lin(x, w, prefix + ".in_x"), w, prefix + ".dw", 1));
  const Var<T> x1 = ln(mspa_ssm(u, w, prefix, cfg), w, prefix + ".ln");
  const Var<T> x2 = silu(lin(x, w, prefix + ".in_z"));
  return lin(mul(x1, x2), w, prefix + ".out");
}

template <typename T>
Var<T> spe_mamba_block(const Var<T>& x, const Weights<T>& w, const std::string& prefix) {
  if (x.value().rank() != 3) throw DimensionError("spe_mamba_block: input must be [H,W,C]");
  const std::size_t H = x.dim(0), W = x.dim(1);
  const Var<T> u = silu(dw(lin(x, w, prefix + ".in_x"), w, prefix + ".dw", 1));
  const Var<T> fwd = spectral_unflatten(
      ssm_self(spectral_flatten(u, SpectralDirection::Forward), w.ssm(prefix + ".dir0")), SpectralDirection::Forward,
      H, W);
  const Var<T> rev = spectral_unflatten(
      ssm_self(spectral_flatten(u, SpectralDirection::Reverse), w.ssm(prefix + ".dir1")), SpectralDirection::Reverse,
      H, W);
  const Var<T> x1 = ln(add(fwd, rev), w, prefix + ".ln");
  const Var<T> x2 = silu(lin(x, w, prefix + ".in_z"));
  return lin(mul(x1, x2), w, prefix + ".out");
}

template <typename T>
std::pair<Var<T>, Var<T>> fus_mamba_block(const Var<T>& f_h, const Var<T>& f_x, const Weights<T>& w,
                                          const std::string& prefix) {
  if (f_h.shape() != f_x.shape() || f_h.value().rank() != 3) {
    throw DimensionError("fus_mamba_block: modalities must share an [H,W,C] shape");
  }
  const std::size_t H = f_h.dim(0), W = f_h.dim(1);
  auto sequence = [&](const Var<T>& f, const std::string& p) {
    return sigma(silu(dw(lin(f, w, p + ".in_x"), w, p + ".dw", 1)), RouteId::RowForward);
  };
  const std::string ph = prefix + ".h", px = prefix + ".x";
  const auto [o_h, o_x] = fus_ssm(sequence(f_h, ph), sequence(f_x, px), w.ssm(prefix + ".ssm_h"),
                                  w.ssm(prefix + ".ssm_x"));
  auto finish = [&](const Var<T>& seq_out, const Var<T>& f, const std::string& p) {
    const Var<T> x1 = ln(beta(seq_out, RouteId::RowForward, H, W), w, p + ".ln");
    const Var<T> x2 = silu(lin(f, w, p + ".in_z"));
    return lin(mul(x1, x2), w, p + ".out");
  };
  return {finish(o_h, f_h, ph), finish(o_x, f_x, px)};
}

template <typename T>
std::pair<Var<T>, Var<T>> ss_mamba_module(const Var<T>& h_in, const Var<T>& x_in, const Weights<T>& w,
                                          std::size_t index, const ModelConfig& cfg) {
  const std::string p = "module" + std::to_string(index);
  Var<T> f_h = mspa_mamba_block(h_in, w, p + ".mspa_h", cfg);
  if (cfg.use_spe) f_h = spe_mamba_block(f_h, w, p + ".spe_h");
  const Var<T> f_x = mspa_mamba_block(x_in, w, p + ".mspa_x", cfg);
  if (!cfg.use_fus) return {f_h, f_x};
  return fus_mamba_block(f_h, f_x, w, p + ".fus");
}

template <typename T>
std::pair<Var<T>, Var<T>> features(const Var<T>& hsi_patch, const Var<T>& aux_patch, const Weights<T>& w,
                                   const ModelConfig& cfg) {
  const auto ps = static_cast<std::size_t>(cfg.patch);
  if (hsi_patch.shape() != Shape{ps, ps, static_cast<std::size_t>(cfg.Np)} ||
      aux_patch.shape() != Shape{ps, ps, static_cast<std::size_t>(cfg.aux_channels)}) {
    throw DimensionError("forward: patches " + shape_to_string(hsi_patch.shape()) + " / " +
                         shape_to_string(aux_patch.shape()) + " do not match the model config");
  }
  Var<T> h = linear(hsi_patch, w["stem_h.W"]);
  Var<T> x = linear(aux_patch, w["stem_x.W"]);
  for (int m = 0; m < cfg.L; ++m) std::tie(h, x) = ss_mamba_module(h, x, w, static_cast<std::size_t>(m), cfg);
  return {h, x};
}

template <typename T>
Var<T> forward(const Var<T>& hsi_patch, const Var<T>& aux_patch, const Weights<T>& w, const ModelConfig& cfg) {
  const auto [h, x] = features(hsi_patch, aux_patch, w, cfg);
  const Var<T> pooled = concat(mean_rows(h), mean_rows(x));
  return lin(silu(lin(pooled, w, "head.fc1")), w, "head.fc2");
}

namespace {

std::size_t linear_params(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t ssm_params(std::size_t width, std::size_t states) { return 3 * width * states + width * width + 2 * width; }

}  // namespace

std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const auto C = static_cast<std::size_t>(cfg.C);
  const auto N = static_cast<std::size_t>(cfg.N);
  const std::size_t dwconv = 10 * C, norm = 2 * C;
  const std::size_t gated = 3 * linear_params(C, C) + dwconv + norm;
  const std::size_t route_sets = cfg.share_route_params ? 1 : static_cast<std::size_t>(cfg.routes);
  const std::size_t mspa = gated + (full_routes(cfg) > 0 ? dwconv : 0) + (cfg.down_paths > 0 ? dwconv : 0) +
                           route_sets * ssm_params(C, N);
  const auto spatial = static_cast<std::size_t>(cfg.patch * cfg.patch);
  const std::size_t spe = gated + 2 * ssm_params(spatial, N);
  const std::size_t fus = 2 * gated + 2 * ssm_params(C, N);
  const std::size_t per_module = 2 * mspa + (cfg.use_spe ? spe : 0) + (cfg.use_fus ? fus : 0);
  return static_cast<std::size_t>(cfg.Np + cfg.aux_channels) * C + static_cast<std::size_t>(cfg.L) * per_module +
         linear_params(2 * C, C) + linear_params(C, static_cast<std::size_t>(cfg.classes));
}

double flop_estimate(const ModelConfig& cfg) {
  cfg.validate();
  const double C = cfg.C, N = cfg.N;
  const double S = static_cast<double>(cfg.patch) * cfg.patch;
  const double side2 = std::ceil(cfg.patch / 2.0);
  const double S2 = side2 * side2;
  auto lin = [](double rows, double in, double out) { return 2.0 * rows * in * out; };
  auto conv = [&](double positions) { return 2.0 * 9.0 * positions * C; };
  // Selection projections, discretization and the sequential scan for P steps of width w.
  auto ssm = [&](double P, double width) {
    const double select = lin(P, width, 2 * N) + lin(P, width, width);
    const double discretize = 2.0 * P * width * N;
    const double scan = 3.0 * P * width * N + 2.0 * P * width * N + 2.0 * P * width;
    return select + discretize + scan;
  };
  const double gated = 3.0 * lin(S, C, C) + conv(S) + S * C;
  const double n_full = cfg.routes - cfg.down_paths;
  const double mspa = gated + (n_full > 0 ? conv(S) : 0.0) + (cfg.down_paths > 0 ? conv(S2) : 0.0) +
                      n_full * ssm(S, C) + cfg.down_paths * ssm(S2, C);
  const double spe = gated + 2.0 * ssm(C, S);
  const double fus = 2.0 * gated + 2.0 * ssm(S, C);
  const double per_module = 2.0 * mspa + (cfg.use_spe ? spe : 0.0) + (cfg.use_fus ? fus : 0.0);
  return lin(S, cfg.Np, C) + lin(S, cfg.aux_channels, C) + cfg.L * per_module + lin(1, 2 * C, C) +
         lin(1, C, cfg.classes);
}

#define MSF_INSTANTIATE_MODEL(T)                                                                                    \
  template void init_linear(WeightStore<T>&, const std::string&, std::size_t, std::size_t, bool, Rng&);             \
  template void init_dwconv(WeightStore<T>&, const std::string&, std::size_t, Rng&);                                \
  template void init_layer_norm(WeightStore<T>&, const std::string&, std::size_t);                                  \
  template void init_ssm(WeightStore<T>&, const std::string&, std::size_t, std::size_t, AInit, Rng&);               \
  template void init_mspa_block(WeightStore<T>&, const std::string&, const ModelConfig&, Rng&);                     \
  template void init_spe_block(WeightStore<T>&, const std::string&, const ModelConfig&, std::size_t, Rng&);         \
  template void init_fus_block(WeightStore<T>&, const std::string&, const ModelConfig&, Rng&);                      \
  template WeightStore<T> init_weights(const ModelConfig&, std::uint64_t);                                          \
  template Var<T> mspa_ssm(const Var<T>&, const Weights<T>&, const std::string&, const ModelConfig&);               \
  template Var<T> mspa_mamba_block(const Var<T>&, const Weights<T>&, const std::string&, const ModelConfig&);       \
  template Var<T> spe_mamba_block(const Var<T>&, const Weights<T>&, const std::string&);                            \
  template std::pair<Var<T>, Var<T>> fus_mamba_block(const Var<T>&, const Var<T>&, const Weights<T>&,               \
                                                     const std::string&);                                           \
  template std::pair<Var<T>, Var<T>> ss_mamba_module(const Var<T>&, const Var<T>&, const Weights<T>&, std::size_t, \
                                                     const ModelConfig&);                                           \
  template std::pair<Var<T>, Var<T>> features(const Var<T>&, const Var<T>&, const Weights<T>&, const ModelConfig&); \
  template Var<T> forward(const Var<T>&, const Var<T>&, const Weights<T>&, const ModelConfig&);

MSF_INSTANTIATE_MODEL(float)
MSF_INSTANTIATE_MODEL(double)

}  // namespace msf::model
