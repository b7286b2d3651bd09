#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msfmamba/ops.hpp"

namespace msf {

enum class AInit { Fixed, Random };

/// Architecture hyperparameters.
struct ModelConfig {
  int L = 2;              // stacked spatial-spectral modules
  int Np = 30;            // principal components kept from the HSI cube
  int N = 16;             // SSM states
  int C = 64;             // hidden width
  int patch = 8;          // spatial patch size
  int routes = 4;         // 2, 4 or 6 scanning routes in MSpa-SSM
  int down_paths = 2;     // routes that run on the stride-2 map
  int aux_channels = 1;   // LiDAR/SAR channels
  int classes = 3;
  InterpMode interp = InterpMode::Bilinear;
  bool share_route_params = false;
  bool use_spe = true;
  bool use_fus = true;
  AInit a_init = AInit::Fixed;

  /// Throws ConfigError on an illegal combination.
  void validate() const;
};

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int save_every = 0;        // 0: only the final checkpoint
  int threads = 1;           // >1 enables sharded batches (deterministic per thread count)
  double early_stop_oa = 0;  // stop once train OA reaches this; 0 disables
  bool use_f64 = false;      // training dtype; float32 unless set

  void validate() const;
};

struct SynthConfig {
  int bands = 48;  // raw spectral bands of the generated HSI cube
  int n_train = 300;
  int n_test = 300;
  double noise = 0.05;
};

struct ScanBenchConfig {
  int P = 4096;
  int C = 8;
  int N = 16;
  int chunk = 64;
  int reps = 3;
  int threads = 1;
};

/// Everything the CLI can configure, flat-keyed so `--set key=value` reaches any field.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  ScanBenchConfig bench;
  std::uint64_t seed = 0;
};

/// Applies one `key=value` setting. Unknown keys or malformed values throw ConfigError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// "key=value" form of apply_setting.
void apply_setting(RunConfig& cfg, const std::string& assignment);

/// Loads a JSON object of flat keys (same names as `--set`).
void load_config_file(RunConfig& cfg, const std::string& path);

void apply_config_json(RunConfig& cfg, const nlohmann::json& j);

std::vector<std::string> config_keys();

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace msf
