#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "msfmamba/config.hpp"
#include "msfmamba/dataset.hpp"
#include "msfmamba/metrics.hpp"
#include "msfmamba/pca.hpp"
#include "msfmamba/weights.hpp"

namespace msf {

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_oa = 0.0;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
};

/// Fits PCA on the training pixels, then minimizes mean cross-entropy over
/// mini-batches. Epoch 0 records the loss and accuracy of the initial weights.
/// Each epoch appends a `epoch=.. loss=.. train_oa=..` line to `log` and to
/// `<out_dir>/train_log.txt`. The final checkpoint is `<out_dir>/checkpoint.msfc`;
/// intermediate ones are written every `save_every` epochs.
///
/// With threads == 1 the run is bitwise reproducible for a fixed seed.
TrainResult train(const DatasetManifest& manifest, const RunConfig& cfg, const std::filesystem::path& out_dir,
                  std::ostream* log = nullptr);

enum class Split { Train, Test };

Split parse_split(const std::string& name);

/// Batched, gradient-free inference over a split of the manifest.
Metrics evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest, Split split,
                 std::size_t threads = 1);

/// Training state that lives in a checkpoint.
template <typename T>
struct TrainedModel {
  ModelConfig cfg;
  WeightStore<T> weights;
  PcaModel pca;
};

template <typename T>
TrainedModel<T> load_trained_model(const std::filesystem::path& checkpoint);

template <typename T>
void save_trained_model(const std::filesystem::path& path, const TrainedModel<T>& model, int epoch,
                        std::uint64_t seed);

/// Predicted class per patch, no tape recorded.
template <typename T>
std::vector<std::size_t> predict(const TrainedModel<T>& model, const PatchSet<T>& patches, std::size_t threads = 1);

/// One optimizer update. Adam keeps bias-corrected first/second moments.
template <typename T>
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const WeightStore<T>& weights);
  void step(WeightStore<T>& weights, const std::map<std::string, Tensor<T>>& grads);
  long steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::map<std::string, std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace msf
