// msfmamba command line tool. Exit codes: 0 success, 1 usage or validation
// failure, 2 runtime error.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msfmamba/config.hpp"
#include "msfmamba/dataset.hpp"
#include "msfmamba/erf.hpp"
#include "msfmamba/error.hpp"
#include "msfmamba/gradcheck_suite.hpp"
#include "msfmamba/model.hpp"
#include "msfmamba/rng.hpp"
#include "msfmamba/scan_bench.hpp"
#include "msfmamba/tensor_io.hpp"
#include "msfmamba/train.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "JSON file of flat config keys")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "Override a config key, key=value (repeatable)");
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&o](const std::uint64_t& s) {
        o.seed = s;
        o.seed_given = true;
      },
      "Random seed");
}

msf::RunConfig resolve(const CommonOptions& o) {
  msf::RunConfig cfg;
  if (!o.config_file.empty()) msf::load_config_file(cfg, o.config_file);
  for (const auto& s : o.sets) msf::apply_setting(cfg, s);
  if (o.seed_given) cfg.seed = o.seed;
  return cfg;
}

void print_metrics(const msf::Metrics& m, const std::string& split) {
  std::printf("split=%s samples=%llu oa=%.6f aa=%.6f kappa=%.6f\n", split.c_str(),
              static_cast<unsigned long long>(m.total()), m.oa, m.aa, m.kappa);
  for (std::size_t i = 0; i < m.classes; ++i) {
    std::printf("confusion_row=%zu", i);
    for (std::size_t j = 0; j < m.classes; ++j) std::printf(" %llu", static_cast<unsigned long long>(m.at(i, j)));
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source remote sensing classification with selective state-space models"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-source dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a dataset manifest");
  std::string train_manifest, train_out;
  train->add_option("--manifest", train_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory for logs and checkpoints")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_manifest, eval_split = "test";
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "train or test");

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  std::string grad_filter;
  gradcheck->add_option("--filter", grad_filter, "Only run checks whose name contains this");

  auto* scanbench = app.add_subcommand("scanbench", "Time sequential vs chunked scans and report their error");

  auto* erf = app.add_subcommand("erf", "Effective receptive field map");
  std::string erf_target = "model", erf_ckpt, erf_manifest, erf_out;
  std::size_t erf_pixel = 0;
  erf->add_option("--target", erf_target, "model, mspa or dwconv");
  erf->add_option("--checkpoint", erf_ckpt, "Use trained weights (target=model only)")->check(CLI::ExistingFile);
  auto* manifest_opt =
      erf->add_option("--manifest", erf_manifest, "Take the patch from this dataset")->check(CLI::ExistingFile);
  erf->add_option("--pixel", erf_pixel, "Center pixel index (with --manifest)")->needs(manifest_opt);
  erf->add_option("--out", erf_out, "Write the map as a tensor file");

  auto* params = app.add_subcommand("params", "Print parameter count and FLOP estimate");

  for (auto* cmd : {synth, train, eval, gradcheck, scanbench, erf, params}) add_common(cmd, common);
  int eval_threads = 1;
  eval->add_option("--threads", eval_threads, "Inference threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    const msf::RunConfig cfg = resolve(common);
    if (*synth) {
      msf::SynthOptions o;
      o.classes = static_cast<std::size_t>(cfg.model.classes);
      o.patch = static_cast<std::size_t>(cfg.model.patch);
      o.bands = static_cast<std::size_t>(cfg.synth.bands);
      o.aux_channels = static_cast<std::size_t>(cfg.model.aux_channels);
      o.n_train = static_cast<std::size_t>(cfg.synth.n_train);
      o.n_test = static_cast<std::size_t>(cfg.synth.n_test);
      o.noise = cfg.synth.noise;
      o.seed = cfg.seed;
      const auto m = msf::synth_generate(synth_out, o);
      std::printf("manifest=%s height=%zu width=%zu bands=%zu train=%zu test=%zu\n",
                  (std::filesystem::path(synth_out) / "manifest.json").string().c_str(), m.height, m.width, m.bands,
                  m.train.size(), m.test.size());
    } else if (*train) {
      const auto manifest = msf::load_manifest(train_manifest);
      const auto result = msf::train(manifest, cfg, train_out, &std::cout);
      std::printf("checkpoint=%s epochs=%d early_stopped=%d\n", result.checkpoint.string().c_str(),
                  result.history.back().epoch, result.early_stopped ? 1 : 0);
    } else if (*eval) {
      const auto manifest = msf::load_manifest(eval_manifest);
      const auto m = msf::evaluate(eval_ckpt, manifest, msf::parse_split(eval_split),
                                   static_cast<std::size_t>(eval_threads));
      print_metrics(m, eval_split);
    } else if (*gradcheck) {
      bool all = true;
      const auto entries = msf::run_grad_suite(cfg.seed, grad_filter, [&](const msf::GradSuiteEntry& e) {
        std::printf("check=%s %s tol=%g\n", e.name.c_str(), msf::describe(e.report).c_str(), e.tol);
        std::fflush(stdout);
        all = all && e.report.passed;
      });
      if (entries.empty()) throw msf::ConfigError("no gradient check matches '" + grad_filter + "'");
      std::printf("gradcheck=%s checks=%zu\n", all ? "pass" : "fail", entries.size());
      return all ? kOk : kValidation;
    } else if (*scanbench) {
      const auto r = msf::run_scan_bench(cfg.bench, cfg.seed);
      std::printf("%s\n", msf::format_scan_bench(r).c_str());
      const bool ok = r.max_rel_error_f32 < 1e-5 && r.max_rel_error_f64 < 1e-12;
      return ok ? kOk : kValidation;
    } else if (*erf) {
      const auto target = msf::parse_erf_target(erf_target);
      msf::ErfResult r;
      if (!erf_ckpt.empty() || !erf_manifest.empty()) {
        if (target != msf::ErfTarget::Model) throw msf::ConfigError("--checkpoint and --manifest need target=model");
        if (!erf_manifest.empty() && erf_ckpt.empty()) {
          throw msf::ConfigError("--manifest needs --checkpoint so the patch can be projected with its PCA");
        }
        msf::TrainedModel<double> tm;
        if (!erf_ckpt.empty()) {
          tm = msf::load_trained_model<double>(erf_ckpt);
        } else {
          tm.cfg = cfg.model;
          tm.weights = msf::model::init_weights<double>(cfg.model, cfg.seed);
        }
        const auto P = static_cast<std::size_t>(tm.cfg.patch);
        msf::Tensor<double> hsi, aux;
        if (!erf_manifest.empty()) {
          const auto manifest = msf::load_manifest(erf_manifest);
          const auto scene = msf::load_scene(manifest);
          const auto patches = msf::extract_patches<double>(msf::pca_apply(tm.pca, scene.hsi), scene.aux,
                                                            scene.labels, {erf_pixel}, P);
          hsi = patches.hsi[0];
          aux = patches.aux[0];
        } else {
          msf::Rng rng(cfg.seed);
          hsi = rng.normal_tensor<double>(msf::Shape{P, P, static_cast<std::size_t>(tm.cfg.Np)});
          aux = rng.normal_tensor<double>(msf::Shape{P, P, static_cast<std::size_t>(tm.cfg.aux_channels)});
        }
        r = msf::erf_model(tm.weights, tm.cfg, hsi, aux);
      } else {
        r = msf::erf_random(target, cfg.model, cfg.seed);
      }
      std::printf("target=%s %s", erf_target.c_str(), msf::erf_summary(r).c_str());
      if (!erf_out.empty()) msf::io::save_tensor(erf_out, r.map);
    } else if (*params) {
      cfg.model.validate();
      std::printf("params=%zu flops=%.0f\n", msf::model::param_count(cfg.model),
                  msf::model::flop_estimate(cfg.model));
    }
    return kOk;
  } catch (const msf::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const msf::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const msf::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
