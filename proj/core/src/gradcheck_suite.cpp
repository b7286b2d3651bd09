#include "msfmamba/gradcheck_suite.hpp"

#include "msfmamba/model.hpp"
#include "msfmamba/ops.hpp"
#include "msfmamba/rng.hpp"
#include "msfmamba/ssm.hpp"
#include "msfmamba/weights.hpp"

namespace msf {

namespace {

using VarD = Var<double>;
using Vars = std::vector<VarD>;

constexpr double kTol = 1e-4;
constexpr double kModelTol = 1e-3;

// sum(out * R) with R a fixed pseudo-random tensor; a plain sum would hide
// errors in ops whose outputs sum to a constant (layer norm, softmax).
VarD weighted_sum(const VarD& out, std::uint64_t salt) {
  Rng rng(0xC0FFEEull + salt);
  return sum(mul(out, VarD::constant(rng.normal_tensor<double>(out.shape()))));
}

struct Case {
  std::string name;
  double tol;
  std::function<GradCheckReport()> run;
};

// Inputs followed by every tensor of `store`; `f` sees the inputs and a Weights view.
GradCheckReport check_with_weights(const WeightStore<double>& store, const std::vector<Tensor<double>>& inputs,
                                   const std::function<VarD(const Vars&, const Weights<double>&)>& f, double tol) {
  std::vector<Tensor<double>> all = inputs;
  std::vector<std::string> names;
  for (const auto& [name, t] : store.entries()) {
    names.push_back(name);
    all.push_back(t);
  }
  const std::size_t n_in = inputs.size();
  return grad_check(
      [&](const Vars& v) {
        std::map<std::string, VarD> named;
        for (std::size_t k = 0; k < names.size(); ++k) named.emplace(names[k], v[n_in + k]);
        return f(Vars(v.begin(), v.begin() + static_cast<long>(n_in)), Weights<double>::from_vars(std::move(named)));
      },
      all, 1e-5, tol);
}

SsmParams<double> ssm_from(const Vars& v, std::size_t at) {
  return {v[at], v[at + 1], v[at + 2], v[at + 3], v[at + 4], v[at + 5]};
}

std::vector<Tensor<double>> random_ssm(std::size_t C, std::size_t N, Rng& rng) {
  WeightStore<double> store;
  model::init_ssm(store, "s", C, N, AInit::Random, rng);
  // Perturb D and b_dt away from their structured initial values.
  auto D = rng.uniform_tensor<double>(Shape{C}, 0.5, 1.5);
  auto b = rng.uniform_tensor<double>(Shape{C}, -3.0, 0.0);
  return {store.at("s.A"), D, store.at("s.W_B"), store.at("s.W_C"), store.at("s.W_dt"), b};
}

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.L = 1;
  cfg.Np = 4;
  cfg.N = 4;
  cfg.C = 4;
  cfg.patch = 4;
  cfg.routes = 4;
  cfg.down_paths = 2;
  cfg.aux_channels = 1;
  cfg.classes = 3;
  return cfg;
}

std::vector<Case> build_cases(std::uint64_t seed) {
  std::vector<Case> cases;
  auto rng = std::make_shared<Rng>(seed);
  auto normal = [rng](Shape s) { return rng->normal_tensor<double>(std::move(s)); };
  auto unary = [&](const std::string& name, Shape shape, std::function<VarD(const VarD&)> op) {
    cases.push_back({name, kTol, [=] {
                       return grad_check([op](const VarD& x) { return weighted_sum(op(x), 1); }, normal(shape));
                     }});
  };
  auto multi = [&](const std::string& name, std::vector<Tensor<double>> inputs, std::function<VarD(const Vars&)> op,
                   double tol = kTol) {
    cases.push_back({name, tol, [=] {
                       return grad_check([op](const Vars& v) { return weighted_sum(op(v), 2); }, inputs, 1e-5, tol);
                     }});
  };

  multi("add", {normal({3, 4}), normal({3, 4})}, [](const Vars& v) { return add(v[0], v[1]); });
  multi("sub", {normal({3, 4}), normal({3, 4})}, [](const Vars& v) { return sub(v[0], v[1]); });
  multi("mul", {normal({3, 4}), normal({3, 4})}, [](const Vars& v) { return mul(v[0], v[1]); });
  unary("scale", {5}, [](const VarD& x) { return scale(x, -1.7); });
  unary("sum", {2, 3}, [](const VarD& x) { return sum(x); });
  unary("mean", {2, 3}, [](const VarD& x) { return mean(x); });
  multi("linear", {normal({5, 3}), normal({3, 4}), normal({4})},
        [](const Vars& v) { return linear(v[0], v[1], v[2]); });
  multi("linear_no_bias", {normal({2, 3, 3}), normal({3, 2})}, [](const Vars& v) { return linear(v[0], v[1]); });
  multi("dwconv_stride1", {normal({4, 5, 2}), normal({3, 3, 2}), normal({2})},
        [](const Vars& v) { return depthwise_conv2d(v[0], v[1], 1, v[2]); });
  multi("dwconv_stride2", {normal({5, 4, 2}), normal({3, 3, 2}), normal({2})},
        [](const Vars& v) { return depthwise_conv2d(v[0], v[1], 2, v[2]); });
  unary("silu", {4, 3}, [](const VarD& x) { return silu(x); });
  cases.push_back({"softplus", kTol, [] {
                     Tensor<double> x(Shape{8}, std::vector<double>{-30, -5, -1, -0.1, 0.2, 1.5, 6, 25});
                     return grad_check([](const VarD& v) { return weighted_sum(softplus(v), 3); }, x);
                   }});
  multi("layer_norm", {normal({3, 5}), normal({5}), normal({5})},
        [](const Vars& v) { return layer_norm(v[0], v[1], v[2]); });
  unary("interpolate_bilinear", {2, 3, 2}, [](const VarD& x) { return interpolate_up2(x, 4, 5, InterpMode::Bilinear); });
  unary("interpolate_nearest", {2, 2, 2}, [](const VarD& x) { return interpolate_up2(x, 3, 4, InterpMode::Nearest); });
  unary("reshape", {2, 6}, [](const VarD& x) { return reshape(x, Shape{3, 4}); });
  unary("gather_rows", {4, 3}, [](const VarD& x) { return gather_rows(x, {3, 0, 0, 2, 1}); });
  unary("transpose2d", {3, 5}, [](const VarD& x) { return transpose2d(x); });
  unary("mean_rows", {2, 3, 4}, [](const VarD& x) { return mean_rows(x); });
  multi("concat", {normal({3}), normal({2})}, [](const Vars& v) { return concat(v[0], v[1]); });
  unary("cross_entropy", {4}, [](const VarD& x) { return cross_entropy(x, 2); });
  cases.push_back({"exp_outer", kTol, [rng] {
                     auto delta = rng->uniform_tensor<double>(Shape{3, 2}, 0.01, 0.5);
                     auto A = rng->uniform_tensor<double>(Shape{2, 4}, -4.0, -0.5);
                     return grad_check([](const Vars& v) { return weighted_sum(exp_outer(v[0], v[1]), 4); },
                                       {delta, A});
                   }});
  multi("scale_outer", {normal({3, 2}), normal({3, 4})}, [](const Vars& v) { return scale_outer(v[0], v[1]); });

  // Scan kernels.
  cases.push_back({"select_parameters", kTol, [rng] {
                     std::vector<Tensor<double>> in{rng->normal_tensor<double>(Shape{6, 3})};
                     for (auto& t : random_ssm(3, 4, *rng)) in.push_back(t);
                     return grad_check(
                         [](const Vars& v) {
                           auto s = select_parameters(v[0], ssm_from(v, 1));
                           return add(add(weighted_sum(s.B, 5), weighted_sum(s.C, 6)), weighted_sum(s.delta, 7));
                         },
                         in);
                   }});
  cases.push_back({"discretize", kTol, [rng] {
                     auto delta = rng->uniform_tensor<double>(Shape{5, 3}, 0.01, 0.3);
                     auto A = rng->uniform_tensor<double>(Shape{3, 4}, -4.0, -0.5);
                     auto B = rng->normal_tensor<double>(Shape{5, 4});
                     return grad_check(
                         [](const Vars& v) {
                           auto d = discretize(v[0], v[1], v[2]);
                           return add(weighted_sum(d.a_bar, 8), weighted_sum(d.b_bar, 9));
                         },
                         {delta, A, B});
                   }});
  cases.push_back({"scan_sequential", kTol, [rng] {
                     const std::size_t P = 7, C = 3, N = 4;
                     auto a = rng->uniform_tensor<double>(Shape{P, C, N}, 0.3, 0.99);
                     return grad_check(
                         [](const Vars& v) {
                           return weighted_sum(scan_sequential(DiscreteParams<double>{v[0], v[1]}, v[2], v[3], v[4]),
                                               10);
                         },
                         {a, rng->normal_tensor<double>(Shape{P, C, N}), rng->normal_tensor<double>(Shape{P, N}),
                          rng->normal_tensor<double>(Shape{C}), rng->normal_tensor<double>(Shape{P, C})});
                   }});
  cases.push_back({"ssm_self", kTol, [rng] {
                     std::vector<Tensor<double>> in{rng->normal_tensor<double>(Shape{9, 3})};
                     for (auto& t : random_ssm(3, 4, *rng)) in.push_back(t);
                     return grad_check([](const Vars& v) { return weighted_sum(ssm_self(v[0], ssm_from(v, 1)), 11); },
                                       in);
                   }});
  cases.push_back({"fus_ssm", kTol, [rng] {
                     std::vector<Tensor<double>> in{rng->normal_tensor<double>(Shape{8, 3}),
                                                    rng->normal_tensor<double>(Shape{8, 3})};
                     for (auto& t : random_ssm(3, 4, *rng)) in.push_back(t);
                     for (auto& t : random_ssm(3, 4, *rng)) in.push_back(t);
                     return grad_check(
                         [](const Vars& v) {
                           auto [ho, xo] = fus_ssm(v[0], v[1], ssm_from(v, 2), ssm_from(v, 8));
                           return add(weighted_sum(ho, 12), weighted_sum(xo, 13));
                         },
                         in);
                   }});

  // Blocks at 4x4, C = 4, N = 4.
  auto block_case = [&](const std::string& name, ModelConfig cfg) {
    cases.push_back({name, kTol, [rng, cfg] {
                       WeightStore<double> store;
                       model::init_mspa_block(store, "b", cfg, *rng);
                       const auto x = rng->normal_tensor<double>(Shape{4, 4, 4});
                       return check_with_weights(
                           store, {x},
                           [&](const Vars& in, const Weights<double>& w) {
                             return weighted_sum(model::mspa_mamba_block(in[0], w, "b", cfg), 14);
                           },
                           kTol);
                     }});
  };
  block_case("mspa_block", small_cfg());
  {
    auto cfg = small_cfg();
    cfg.routes = 6;
    cfg.down_paths = 3;
    cfg.interp = InterpMode::Nearest;
    block_case("mspa_block_6routes", cfg);
    cfg = small_cfg();
    cfg.routes = 2;
    cfg.down_paths = 0;
    cfg.share_route_params = true;
    block_case("mspa_block_shared", cfg);
  }
  cases.push_back({"spe_block", kTol, [rng] {
                     WeightStore<double> store;
                     model::init_spe_block(store, "b", small_cfg(), 16, *rng);
                     const auto x = rng->normal_tensor<double>(Shape{4, 4, 4});
                     return check_with_weights(
                         store, {x},
                         [](const Vars& in, const Weights<double>& w) {
                           return weighted_sum(model::spe_mamba_block(in[0], w, "b"), 15);
                         },
                         kTol);
                   }});
  cases.push_back({"fus_block", kTol, [rng] {
                     WeightStore<double> store;
                     model::init_fus_block(store, "b", small_cfg(), *rng);
                     const auto h = rng->normal_tensor<double>(Shape{4, 4, 4});
                     const auto x = rng->normal_tensor<double>(Shape{4, 4, 4});
                     return check_with_weights(
                         store, {h, x},
                         [](const Vars& in, const Weights<double>& w) {
                           auto [ho, xo] = model::fus_mamba_block(in[0], in[1], w, "b");
                           return add(weighted_sum(ho, 16), weighted_sum(xo, 17));
                         },
                         kTol);
                   }});
  cases.push_back({"model_cross_entropy", kModelTol, [rng, seed] {
                     const auto cfg = small_cfg();
                     const auto store = model::init_weights<double>(cfg, seed);
                     const auto hsi = rng->normal_tensor<double>(Shape{4, 4, 4});
                     const auto aux = rng->normal_tensor<double>(Shape{4, 4, 1});
                     return check_with_weights(
                         store, {hsi, aux},
                         [&](const Vars& in, const Weights<double>& w) {
                           return cross_entropy(model::forward(in[0], in[1], w, cfg), 1);
                         },
                         kModelTol);
                   }});
  return cases;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, const std::string& filter,
                                           const std::function<void(const GradSuiteEntry&)>& progress) {
  std::vector<GradSuiteEntry> out;
  for (const auto& c : build_cases(seed)) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradSuiteEntry e{c.name, c.tol, c.run()};
    if (progress) progress(e);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> grad_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : build_cases(0)) names.push_back(c.name);
  return names;
}

}  // namespace msf
