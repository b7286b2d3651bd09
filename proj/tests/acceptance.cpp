// Acceptance runner: one PASS/FAIL line per criterion, tolerances pinned below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "msfmamba/dataset.hpp"
#include "msfmamba/erf.hpp"
#include "msfmamba/gradcheck_suite.hpp"
#include "msfmamba/metrics.hpp"
#include "msfmamba/model.hpp"
#include "msfmamba/scan_bench.hpp"
#include "msfmamba/scan_routes.hpp"
#include "msfmamba/ssm.hpp"
#include "msfmamba/train.hpp"

using namespace msf;
using namespace msf::model;
namespace fs = std::filesystem;

namespace {

constexpr double kScanTolF64 = 1e-12;
constexpr double kScanTolF32 = 1e-5;
constexpr int kScanInstances = 100;
constexpr std::size_t kScanMaxP = 512;
constexpr int kScanBenchP = 4096;
constexpr double kGradSuiteBudgetS = 300;
constexpr double kDeskTrainOa = 0.95;
constexpr double kDeskTestOa = 0.80;
constexpr int kDeskMaxEpochs = 200;
constexpr double kAblationMargin = 0.01;
constexpr int kAblationEpochs = 30;
constexpr int kAblationSeeds = 3;
constexpr double kMetricsTol = 1e-12;
constexpr int kDeterminismEpochs = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome(const fs::path&)> run;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig desk_config(double noise, std::uint64_t seed) {
  RunConfig cfg;
  cfg.model.C = 32;
  cfg.model.N = 8;
  cfg.model.L = 1;
  cfg.model.classes = 3;
  cfg.synth.noise = noise;
  cfg.seed = seed;
  return cfg;
}

DatasetManifest desk_data(const fs::path& dir, const RunConfig& cfg) {
  SynthOptions o;
  o.classes = static_cast<std::size_t>(cfg.model.classes);
  o.patch = static_cast<std::size_t>(cfg.model.patch);
  o.bands = static_cast<std::size_t>(cfg.synth.bands);
  o.aux_channels = static_cast<std::size_t>(cfg.model.aux_channels);
  o.n_train = static_cast<std::size_t>(cfg.synth.n_train);
  o.n_test = static_cast<std::size_t>(cfg.synth.n_test);
  o.noise = cfg.synth.noise;
  o.seed = cfg.seed;
  return synth_generate(dir, o);
}

Outcome gradient_suite(const fs::path&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = run_grad_suite(0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t failed = 0;
  double worst = 0;
  std::string failures;
  for (const auto& e : entries) {
    worst = std::max(worst, e.report.max_rel_error);
    if (!e.report.passed) {
      ++failed;
      failures += " " + e.name;
    }
  }
  const bool pass = failed == 0 && !entries.empty() && secs < kGradSuiteBudgetS;
  return {pass, "entries=" + std::to_string(entries.size()) + " failed=" + std::to_string(failed) +
                    " worst_rel_error=" + fmt(worst) + " seconds=" + fmt(secs) + failures};
}

Outcome scan_oracle(const fs::path&) {
  Rng rng(2024);
  double worst64 = 0, worst32 = 0;
  for (int k = 0; k < kScanInstances; ++k) {
    const std::size_t P = 1 + rng.below(kScanMaxP);
    const std::size_t C = 1 + rng.below(8), N = 1 + rng.below(16), chunk = 1 + rng.below(64);
    const auto d = random_scan_instance(P, C, N, rng);
    const auto f = d.cast<float>();
    worst64 = std::max(worst64, max_relative_error(scan_sequential(d.a_bar, d.b_bar, d.c_mat, d.D, d.x),
                                                   scan_chunked(d.a_bar, d.b_bar, d.c_mat, d.D, d.x, chunk)));
    worst32 = std::max(worst32, max_relative_error(scan_sequential(f.a_bar, f.b_bar, f.c_mat, f.D, f.x),
                                                   scan_chunked(f.a_bar, f.b_bar, f.c_mat, f.D, f.x, chunk)));
  }
  ScanBenchConfig bench;
  bench.P = kScanBenchP;
  const auto b = run_scan_bench(bench, 7);
  const bool pass = worst64 < kScanTolF64 && worst32 < kScanTolF32 && b.max_rel_error_f64 < kScanTolF64 &&
                    b.max_rel_error_f32 < kScanTolF32;
  return {pass, "instances=" + std::to_string(kScanInstances) + " max_rel_error_f64=" + fmt(worst64) +
                    " max_rel_error_f32=" + fmt(worst32) + " bench_P=" + std::to_string(kScanBenchP) +
                    " bench_f64=" + fmt(b.max_rel_error_f64) + " bench_f32=" + fmt(b.max_rel_error_f32)};
}

// Independent index arithmetic for each route.
std::vector<std::size_t> route_oracle(std::size_t H, std::size_t W, RouteId r) {
  std::vector<std::size_t> out;
  const std::size_t n = H * W;
  auto diag = [&](bool anti) {
    for (std::size_t s = 0; s + 1 < H + W; ++s)
      for (std::size_t i = 0; i < H; ++i)
        if (s >= i && s - i < W) out.push_back(i * W + (anti ? W - 1 - (s - i) : s - i));
  };
  switch (r) {
    case RouteId::RowForward:
      for (std::size_t k = 0; k < n; ++k) out.push_back(k);
      break;
    case RouteId::ColForward:
      for (std::size_t k = 0; k < n; ++k) out.push_back((k % H) * W + k / H);
      break;
    case RouteId::RowReverse:
      for (std::size_t k = 0; k < n; ++k) out.push_back(n - 1 - k);
      break;
    case RouteId::ColReverse:
      for (std::size_t k = 0; k < n; ++k) out.push_back(((n - 1 - k) % H) * W + (n - 1 - k) / H);
      break;
    case RouteId::DiagForward:
      diag(false);
      break;
    case RouteId::AntiDiagForward:
      diag(true);
      break;
  }
  return out;
}

Outcome route_bijectivity(const fs::path&) {
  Rng rng(11);
  std::size_t cases = 0, bad_perm = 0, bad_round_trip = 0;
  for (std::size_t H = 1; H <= 8; ++H)
    for (std::size_t W = 1; W <= 8; ++W) {
      const auto x = rng.normal_tensor<double>(Shape{H, W, 3});
      for (auto r : kCanonicalRoutes) {
        ++cases;
        if (route_permutation(H, W, r) != route_oracle(H, W, r)) ++bad_perm;
        if (!bitwise_equal(beta(sigma(x, r), r, H, W), x)) ++bad_round_trip;
      }
    }
  return {bad_perm == 0 && bad_round_trip == 0, "cases=" + std::to_string(cases) + " permutation_mismatches=" +
                                                    std::to_string(bad_perm) + " round_trip_mismatches=" +
                                                    std::to_string(bad_round_trip)};
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

Outcome fus_cross_conditioning(const fs::path&) {
  const std::size_t P = 16, C = 6, N = 4;
  Rng rng(5);
  WeightStore<double> store;
  init_ssm(store, "ssm_h", C, N, AInit::Fixed, rng);
  init_ssm(store, "ssm_x", C, N, AInit::Fixed, rng);
  const auto w = Weights<double>::constants(store);
  const auto ph = w.ssm("ssm_h"), px = w.ssm("ssm_x");
  const auto f_h = Var<double>::constant(rng.normal_tensor<double>(Shape{P, C}));
  const auto f_x = Var<double>::constant(rng.normal_tensor<double>(Shape{P, C}));
  const auto zero_x = Var<double>::constant(Tensor<double>(Shape{P, C}));

  // Parameters of the F_h branch as Fus-SSM builds them: all selected from F_x.
  auto branch = [&](const Var<double>& cond) {
    const auto sel = select_parameters(cond, ph);
    return std::pair{discretize(sel.delta, ph.A, sel.B), sel.C};
  };
  const auto [dp, c_mat] = branch(f_x);
  const auto [dp0, c_mat0] = branch(zero_x);
  const double d_abar = max_abs_diff(dp.a_bar.value(), dp0.a_bar.value());
  const double d_bbar = max_abs_diff(dp.b_bar.value(), dp0.b_bar.value());
  const double d_c = max_abs_diff(c_mat.value(), c_mat0.value());

  // fus_ssm must scan F_h through exactly those parameters.
  const auto fused = fus_ssm(f_h, f_x, ph, px).first.value();
  const auto manual = scan_sequential(dp, c_mat, ph.D, f_h).value();
  const double d_route = max_abs_diff(fused, manual);
  const double d_out = max_abs_diff(fused, fus_ssm(f_h, zero_x, ph, px).first.value());

  // Contrast: a design taking only C from the other modality leaves A_bar, B_bar untouched.
  auto c_only = [&](const Var<double>& cond) {
    const auto own = select_parameters(f_h, ph);
    return std::pair{discretize(own.delta, ph.A, own.B), select_parameters(cond, ph).C};
  };
  const auto [cr, cr_c] = c_only(f_x);
  const auto [cr0, cr_c0] = c_only(zero_x);
  const double cr_abar = max_abs_diff(cr.a_bar.value(), cr0.a_bar.value());
  const double cr_bbar = max_abs_diff(cr.b_bar.value(), cr0.b_bar.value());
  const double cr_dc = max_abs_diff(cr_c.value(), cr_c0.value());

  const bool pass = d_abar > 0 && d_bbar > 0 && d_c > 0 && d_out > 0 && d_route < 1e-12 && cr_abar == 0 &&
                    cr_bbar == 0 && cr_dc > 0;
  return {pass, "delta_a_bar=" + fmt(d_abar) + " delta_b_bar=" + fmt(d_bbar) + " delta_c=" + fmt(d_c) +
                    " delta_output=" + fmt(d_out) + " fus_vs_manual=" + fmt(d_route) + " c_only_design=(" +
                    fmt(cr_abar) + "," + fmt(cr_bbar) + "," + fmt(cr_dc) + ")"};
}

Outcome erf_support(const fs::path&) {
  ModelConfig cfg;
  cfg.C = 32;
  cfg.N = 8;
  cfg.patch = 8;
  const auto mspa = erf_random(ErfTarget::MspaBlock, cfg, 3);
  const auto conv = erf_random(ErfTarget::DwConv, cfg, 3);
  const bool pass = mspa.support_fraction == 1.0 && conv.support_fraction == 9.0 / 64.0;
  return {pass, "mspa_fraction=" + fmt(mspa.support_fraction) + " dwconv_fraction=" + fmt(conv.support_fraction) +
                    " dwconv_support=" + std::to_string(conv.support)};
}

Outcome desk_learning(const fs::path& work) {
  auto cfg = desk_config(0.05, 0);
  cfg.train.epochs = kDeskMaxEpochs;
  cfg.train.early_stop_oa = kDeskTrainOa;
  const auto m = desk_data(work / "data", cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train(m, cfg, work / "run");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto tr = evaluate(result.checkpoint, m, Split::Train);
  const auto te = evaluate(result.checkpoint, m, Split::Test);
  const int epochs = result.history.back().epoch;
  const bool pass = tr.oa >= kDeskTrainOa && te.oa >= kDeskTestOa && epochs <= kDeskMaxEpochs;
  return {pass, "epochs=" + std::to_string(epochs) + " train_oa=" + fmt(tr.oa) + " test_oa=" + fmt(te.oa) +
                    " test_aa=" + fmt(te.aa) + " test_kappa=" + fmt(te.kappa) + " seconds=" + fmt(secs)};
}

Outcome ablation(const fs::path& work) {
  bool pass = true;
  std::string detail;
  double sum_full = 0, sum_mspa = 0;
  for (int s = 0; s < kAblationSeeds; ++s) {
    auto cfg = desk_config(0.3, static_cast<std::uint64_t>(s));
    cfg.train.epochs = kAblationEpochs;
    const auto dir = work / ("seed" + std::to_string(s));
    const auto m = desk_data(dir / "data", cfg);
    const auto full = evaluate(train(m, cfg, dir / "full").checkpoint, m, Split::Test);
    cfg.model.use_spe = false;
    cfg.model.use_fus = false;
    const auto mspa = evaluate(train(m, cfg, dir / "mspa").checkpoint, m, Split::Test);
    pass = pass && full.oa >= mspa.oa - kAblationMargin;
    sum_full += full.oa;
    sum_mspa += mspa.oa;
    detail += " seed" + std::to_string(s) + "_full=" + fmt(full.oa) + " seed" + std::to_string(s) + "_mspa=" +
              fmt(mspa.oa);
  }
  return {pass, "mean_full=" + fmt(sum_full / kAblationSeeds) + " mean_mspa=" + fmt(sum_mspa / kAblationSeeds) +
                    detail};
}

Outcome metrics_oracle(const fs::path&) {
  const auto a = metrics_from_confusion(2, {5, 0, 0, 5});
  const auto b = metrics_from_confusion(2, {4, 1, 1, 4});
  const auto c = metrics_from_confusion(2, {8, 2, 1, 9});
  auto near = [](double x, double want) { return std::abs(x - want) <= kMetricsTol; };
  const bool pass = near(a.oa, 1) && near(a.aa, 1) && near(a.kappa, 1) && near(b.oa, 0.8) && near(b.kappa, 0.6) &&
                    near(c.oa, 0.85) && near(c.aa, 0.85);
  return {pass, "perfect=(" + fmt(a.oa) + "," + fmt(a.aa) + "," + fmt(a.kappa) + ") symmetric=(" + fmt(b.oa) + "," +
                    fmt(b.kappa) + ") asymmetric=(" + fmt(c.oa) + "," + fmt(c.aa) + ")"};
}

Outcome determinism(const fs::path& work) {
  auto cfg = desk_config(0.05, 9);
  cfg.train.epochs = kDeterminismEpochs;
  const auto m = desk_data(work / "data", cfg);
  const auto a = train(m, cfg, work / "a");
  const auto b = train(m, cfg, work / "b");
  const auto bytes_a = file_bytes(a.checkpoint), bytes_b = file_bytes(b.checkpoint);
  const bool pass = !bytes_a.empty() && bytes_a == bytes_b;
  return {pass, "checkpoint_bytes=" + std::to_string(bytes_a.size()) + " identical=" + (pass ? "true" : "false")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only;
  std::string work = (fs::temp_directory_path() / "msfmamba_acceptance").string();
  app.add_option("--only", only, "Run a single criterion");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"gradient_suite", gradient_suite}, {"scan_oracle", scan_oracle},
      {"route_bijectivity", route_bijectivity}, {"fus_cross_conditioning", fus_cross_conditioning},
      {"erf", erf_support}, {"desk_learning", desk_learning},
      {"ablation", ablation}, {"metrics_oracle", metrics_oracle},
      {"determinism", determinism}};

  bool all = true, matched = false;
  for (const auto& c : criteria) {
    if (!only.empty() && c.name != only) continue;
    matched = true;
    const auto dir = fs::path(work) / c.name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    Outcome o;
    try {
      o = c.run(dir);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " " << o.detail << std::endl;
    all = all && o.pass;
  }
  if (!matched) {
    std::cerr << "unknown criterion: " << only << "\n";
    return 2;
  }
  return all ? 0 : 1;
}
