#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <gtest/gtest.h>

#include "msfmamba/dataset.hpp"
#include "msfmamba/erf.hpp"
#include "msfmamba/model.hpp"
#include "msfmamba/tensor_io.hpp"
#include "msfmamba/train.hpp"

using namespace msf;
using namespace msf::model;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "msf_dataset_train" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthOptions small_synth(std::uint64_t seed = 1) {
  SynthOptions o;
  o.n_train = 30;
  o.n_test = 30;
  o.bands = 12;
  o.seed = seed;
  return o;
}

RunConfig small_run() {
  RunConfig cfg;
  cfg.model.Np = 6;
  cfg.model.C = 8;
  cfg.model.N = 4;
  cfg.model.L = 1;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 10;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Synth, DeterministicFiles) {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  synth_generate(a, small_synth(7));
  synth_generate(b, small_synth(7));
  for (const char* f : {"hsi.msft", "aux.msft", "labels.msft", "manifest.json"}) {
    EXPECT_EQ(file_bytes(a / f), file_bytes(b / f)) << f;
  }
  const auto c = scratch("synth_c");
  synth_generate(c, small_synth(8));
  EXPECT_NE(file_bytes(a / "hsi.msft"), file_bytes(c / "hsi.msft"));
}

TEST(Synth, BalancedDisjointSplits) {
  auto o = small_synth();
  o.n_train = 31;
  o.n_test = 29;
  const auto m = synth_generate(scratch("balanced"), o);
  const auto labels = io::load_label_map(m.resolve(m.labels).string());
  EXPECT_NO_THROW(validate_manifest(m, labels));
  ASSERT_EQ(m.train.size(), 31u);
  ASSERT_EQ(m.test.size(), 29u);
  for (const auto* split : {&m.train, &m.test}) {
    std::vector<std::size_t> counts(m.classes(), 0);
    for (auto p : *split) ++counts[labels[p] - 1];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
  }
}

TEST(Synth, RejectsImpossibleRequests) {
  auto o = small_synth();
  o.n_train = 2;
  EXPECT_THROW(synth_generate(scratch("impossible"), o), ConfigError);
  o = small_synth();
  o.classes = 1;
  EXPECT_THROW(synth_generate(scratch("one_class"), o), ConfigError);
  o = small_synth();
  o.noise = -1;
  EXPECT_THROW(synth_generate(scratch("neg_noise"), o), ConfigError);
}

TEST(Synth, NoiselessClassesAreSeparableByNearestCentroid) {
  auto o = small_synth();
  o.noise = 0;
  const auto m = synth_generate(scratch("centroid"), o);
  const auto s = load_scene(m);
  const std::size_t B = m.bands, K = m.classes();
  std::vector<std::vector<double>> centroid(K, std::vector<double>(B, 0.0));
  std::vector<std::size_t> count(K, 0);
  for (auto p : m.train) {
    const std::size_t k = s.labels[p] - 1u;
    ++count[k];
    for (std::size_t b = 0; b < B; ++b) centroid[k][b] += s.hsi[p * B + b];
  }
  for (std::size_t k = 0; k < K; ++k)
    for (auto& v : centroid[k]) v /= static_cast<double>(count[k]);
  std::size_t correct = 0;
  for (auto p : m.test) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      double d = 0;
      for (std::size_t b = 0; b < B; ++b) d += std::pow(s.hsi[p * B + b] - centroid[k][b], 2);
      if (d < best_d) best_d = d, best = k;
    }
    correct += (best + 1 == s.labels[p]);
  }
  EXPECT_EQ(correct, m.test.size());
}

TEST(Manifest, ValidationErrors) {
  const auto m = synth_generate(scratch("validate"), small_synth());
  const auto labels = io::load_label_map(m.resolve(m.labels).string());
  auto overlap = m;
  overlap.test.push_back(overlap.train.front());
  EXPECT_THROW(validate_manifest(overlap, labels), ConfigError);
  auto unlabeled = m;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels[p] == 0) {
      unlabeled.train.push_back(p);
      break;
    }
  }
  ASSERT_GT(unlabeled.train.size(), m.train.size());
  EXPECT_THROW(validate_manifest(unlabeled, labels), ConfigError);
  auto out_of_range = m;
  out_of_range.test.push_back(m.height * m.width);
  EXPECT_THROW(validate_manifest(out_of_range, labels), ConfigError);
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = scratch("manifest_rt");
  const auto m = synth_generate(dir, small_synth());
  const auto back = load_manifest(dir / "manifest.json");
  EXPECT_EQ(back.train, m.train);
  EXPECT_EQ(back.test, m.test);
  EXPECT_EQ(back.class_names, m.class_names);
  EXPECT_EQ(back.bands, m.bands);
  EXPECT_THROW(load_manifest(dir / "nope.json"), IoError);
}

TEST(Patches, MirrorIndex) {
  EXPECT_EQ(mirror_index(-1, 5), 1u);
  EXPECT_EQ(mirror_index(-2, 5), 2u);
  EXPECT_EQ(mirror_index(5, 5), 3u);
  EXPECT_EQ(mirror_index(3, 5), 3u);
  EXPECT_EQ(mirror_index(-7, 1), 0u);
  for (long i = -20; i < 20; ++i) EXPECT_LT(mirror_index(i, 4), 4u);
}

TEST(Patches, CenterIsThePixel) {
  const std::size_t H = 5, W = 6;
  Tensor<double> hsi(Shape{H, W, 2}), aux(Shape{H, W, 1});
  Tensor<std::uint16_t> labels(Shape{H, W}, std::uint16_t{1});
  for (std::size_t p = 0; p < H * W; ++p) {
    hsi[p * 2] = static_cast<double>(p);
    hsi[p * 2 + 1] = -static_cast<double>(p);
    aux[p] = 100.0 + static_cast<double>(p);
  }
  const std::vector<std::size_t> pixels{0, 7, 29};
  for (std::size_t patch : {4u, 5u}) {
    const auto ps = extract_patches<float>(hsi, aux, labels, pixels, patch);
    ASSERT_EQ(ps.hsi.size(), 3u);
    for (std::size_t n = 0; n < pixels.size(); ++n) {
      EXPECT_EQ(ps.hsi[n].shape(), (Shape{patch, patch, 2}));
      EXPECT_EQ(ps.hsi[n].at(patch / 2, patch / 2, 0), static_cast<float>(pixels[n]));
      EXPECT_EQ(ps.aux[n].at(patch / 2, patch / 2, 0), 100.0f + static_cast<float>(pixels[n]));
      EXPECT_EQ(ps.labels[n], 0u);
    }
  }
  labels[7] = 0;
  EXPECT_THROW(extract_patches<float>(hsi, aux, labels, pixels, 4), ConfigError);
  EXPECT_THROW(extract_patches<float>(hsi, aux, labels, {H * W}, 4), DimensionError);
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  const auto dir = scratch("lr0");
  const auto m = synth_generate(dir / "data", small_synth());
  auto cfg = small_run();
  cfg.train.lr = 0;
  cfg.train.epochs = 2;
  const auto result = train(m, cfg, dir / "run");
  const auto trained = load_trained_model<float>(result.checkpoint);
  const auto init = init_weights<float>(cfg.model, cfg.seed);
  ASSERT_EQ(trained.weights.entries().size(), init.entries().size());
  for (const auto& [name, t] : init.entries()) EXPECT_TRUE(bitwise_equal(trained.weights.at(name), t)) << name;
  EXPECT_EQ(result.history.front().loss, result.history.back().loss);
}

TEST(Train, InitialLossIsNearUniform) {
  const auto dir = scratch("epoch0");
  const auto m = synth_generate(dir / "data", small_synth());
  auto cfg = small_run();
  std::ostringstream log;
  const auto result = train(m, cfg, dir / "run", &log);
  ASSERT_EQ(result.history.size(), 2u);
  EXPECT_EQ(result.history[0].epoch, 0);
  EXPECT_NEAR(result.history[0].loss, std::log(3.0), 0.1 * std::log(3.0));
  EXPECT_NE(log.str().find("epoch=0 loss="), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "run" / "train_log.txt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.msfc"));
}

TEST(Train, RunsAreBitwiseReproducible) {
  const auto dir = scratch("repro");
  const auto m = synth_generate(dir / "data", small_synth());
  const auto cfg = small_run();
  const auto a = train(m, cfg, dir / "a");
  const auto b = train(m, cfg, dir / "b");
  EXPECT_EQ(file_bytes(a.checkpoint), file_bytes(b.checkpoint));
  EXPECT_EQ(file_bytes(dir / "a" / "train_log.txt"), file_bytes(dir / "b" / "train_log.txt"));
}

TEST(Train, ConfigMismatchesAreRejected) {
  const auto dir = scratch("mismatch");
  const auto m = synth_generate(dir / "data", small_synth());
  auto cfg = small_run();
  cfg.model.classes = 4;
  EXPECT_THROW(train(m, cfg, dir / "run"), DimensionError);
  cfg = small_run();
  cfg.model.Np = 13;
  EXPECT_THROW(train(m, cfg, dir / "run"), DimensionError);
}

TEST(Train, DivergenceDumpsState) {
  const auto dir = scratch("diverge");
  const auto m = synth_generate(dir / "data", small_synth());
  auto cfg = small_run();
  cfg.train.lr = 1e30;
  cfg.train.optimizer = OptimizerKind::Sgd;
  cfg.train.epochs = 5;
  EXPECT_THROW(train(m, cfg, dir / "run"), NumericError);
  EXPECT_TRUE(fs::exists(dir / "run" / "nan_dump.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "nan_batch.msfc"));
}

TEST(Evaluate, InvariantToSampleOrder) {
  const auto dir = scratch("eval_order");
  auto m = synth_generate(dir / "data", small_synth());
  const auto result = train(m, small_run(), dir / "run");
  const auto a = evaluate(result.checkpoint, m, Split::Test);
  std::reverse(m.test.begin(), m.test.end());
  const auto b = evaluate(result.checkpoint, m, Split::Test, 3);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.total(), m.test.size());
  EXPECT_EQ(parse_split("train"), Split::Train);
  EXPECT_THROW(parse_split("dev"), ConfigError);
}

TEST(Erf, DepthwiseConvHasKernelSupport) {
  ModelConfig cfg;
  cfg.C = 4;
  const auto r = erf_random(ErfTarget::DwConv, cfg, 1);
  EXPECT_EQ(r.support, 9u);
  EXPECT_DOUBLE_EQ(r.support_fraction, 9.0 / 64.0);
}

TEST(Erf, MspaBlockCoversThePatch) {
  ModelConfig cfg;
  cfg.C = 8;
  cfg.N = 4;
  const auto r = erf_random(ErfTarget::MspaBlock, cfg, 1);
  EXPECT_EQ(r.support, 64u);
}

TEST(Erf, ZeroFunctionGivesZeroMap) {
  const SpatialFn f = [](const std::vector<Var<double>>& in) { return scale(in[0], 0.0); };
  const auto r = erf_map(f, {Tensor<double>(Shape{4, 4, 2}, 1.0)});
  EXPECT_EQ(r.support, 0u);
  for (double v : r.map.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(erf_target_name(parse_erf_target("mspa")), "mspa");
  EXPECT_THROW(parse_erf_target("conv"), ConfigError);
}
