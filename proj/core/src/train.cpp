#include "msfmamba/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "msfmamba/model.hpp"
#include "msfmamba/ops.hpp"
#include "msfmamba/rng.hpp"
#include "msfmamba/tensor_io.hpp"

namespace msf {

namespace fs = std::filesystem;

namespace {

template <typename T>
std::size_t argmax(const Tensor<T>& logits) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

template <typename T>
struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::map<std::string, Tensor<T>> grads;
};

// Gradient of (loss_scale * sum of per-sample cross-entropy) over `items`.
template <typename T>
BatchOutcome<T> batch_gradients(const WeightStore<T>& store, const ModelConfig& cfg, const PatchSet<T>& data,
                                std::span<const std::size_t> items, T loss_scale) {
  BatchOutcome<T> out;
  const auto w = Weights<T>::leaves(store);
  Var<T> total;
  for (auto i : items) {
    const Var<T> logits =
        model::forward(Var<T>::constant(data.hsi[i]), Var<T>::constant(data.aux[i]), w, cfg);
    if (argmax(logits.value()) == data.labels[i]) ++out.correct;
    const Var<T> ce = cross_entropy(logits, data.labels[i]);
    out.loss_sum += static_cast<double>(ce.value()[0]);
    total = total.defined() ? add(total, ce) : ce;
  }
  const auto grads = backward(scale(total, loss_scale));
  for (const auto& [name, var] : w.vars()) out.grads.emplace(name, grads.wrt(var));
  return out;
}

template <typename T>
BatchOutcome<T> sharded_batch(const WeightStore<T>& store, const ModelConfig& cfg, const PatchSet<T>& data,
                              std::span<const std::size_t> items, T loss_scale, std::size_t threads) {
  const std::size_t shards = std::min(threads, items.size());
  if (shards <= 1) return batch_gradients(store, cfg, data, items, loss_scale);
  std::vector<BatchOutcome<T>> partial(shards);
  std::vector<std::exception_ptr> errors(shards);
  {
    std::vector<std::jthread> pool;
    const std::size_t per = (items.size() + shards - 1) / shards;
    for (std::size_t s = 0; s < shards; ++s) {
      const std::size_t begin = std::min(items.size(), s * per);
      const std::size_t end = std::min(items.size(), begin + per);
      pool.emplace_back([&, s, begin, end] {
        try {
          if (begin < end) partial[s] = batch_gradients(store, cfg, data, items.subspan(begin, end - begin), loss_scale);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  // Reduce in shard order so the sum is fixed for a given thread count.
  BatchOutcome<T> out = std::move(partial[0]);
  for (std::size_t s = 1; s < shards; ++s) {
    out.loss_sum += partial[s].loss_sum;
    out.correct += partial[s].correct;
    for (auto& [name, g] : partial[s].grads) {
      auto& dst = out.grads[name];
      if (dst.empty()) {
        dst = std::move(g);
        continue;
      }
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
  }
  return out;
}

std::string format_record(const EpochRecord& r) {
  std::ostringstream os;
  os << "epoch=" << r.epoch << " loss=" << std::setprecision(8) << r.loss << " train_oa=" << r.train_oa;
  return os.str();
}

template <typename T>
io::AnyTensor as_any(const Tensor<T>& t) {
  return t;
}

template <typename T>
TrainResult train_typed(const DatasetManifest& manifest, const RunConfig& cfg, const fs::path& out_dir,
                        std::ostream* log) {
  const ModelConfig& mc = cfg.model;
  mc.validate();
  cfg.train.validate();
  if (static_cast<std::size_t>(mc.classes) != manifest.classes()) {
    throw DimensionError("config has " + std::to_string(mc.classes) + " classes, manifest has " +
                         std::to_string(manifest.classes()));
  }
  if (static_cast<std::size_t>(mc.aux_channels) != manifest.aux_channels) {
    throw DimensionError("config has " + std::to_string(mc.aux_channels) + " aux channels, manifest has " +
                         std::to_string(manifest.aux_channels));
  }
  if (static_cast<std::size_t>(mc.Np) > manifest.bands) {
    throw DimensionError("Np = " + std::to_string(mc.Np) + " exceeds the " + std::to_string(manifest.bands) +
                         " HSI bands");
  }
  fs::create_directories(out_dir);

  Scene scene = load_scene(manifest);
  const std::size_t B = manifest.bands;
  Tensor<double> train_pixels(Shape{manifest.train.size(), B});
  for (std::size_t r = 0; r < manifest.train.size(); ++r) {
    std::copy_n(&scene.hsi[manifest.train[r] * B], B, &train_pixels[r * B]);
  }
  TrainedModel<T> tm;
  tm.cfg = mc;
  tm.pca = pca_fit(train_pixels, static_cast<std::size_t>(mc.Np));
  const Tensor<double> reduced = pca_apply(tm.pca, scene.hsi);
  const PatchSet<T> data =
      extract_patches<T>(reduced, scene.aux, scene.labels, manifest.train, static_cast<std::size_t>(mc.patch));
  tm.weights = model::init_weights<T>(mc, cfg.seed);

  Optimizer<T> opt(cfg.train, tm.weights);
  Rng order_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order(data.labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto threads = static_cast<std::size_t>(cfg.train.threads);
  const auto n = static_cast<double>(order.size());

  std::ofstream log_file(out_dir / "train_log.txt");
  TrainResult result;
  result.checkpoint = out_dir / "checkpoint.msfc";
  auto record = [&](const EpochRecord& r) {
    result.history.push_back(r);
    const std::string line = format_record(r);
    log_file << line << "\n";
    log_file.flush();
    if (log) *log << line << std::endl;
  };

  {
    EpochRecord init;
    NoGradGuard guard;
    const auto w = Weights<T>::constants(tm.weights);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
      const auto logits = model::forward(Var<T>::constant(data.hsi[i]), Var<T>::constant(data.aux[i]), w, mc);
      init.loss += static_cast<double>(cross_entropy(logits, data.labels[i]).value()[0]);
      if (argmax(logits.value()) == data.labels[i]) ++correct;
    }
    init.loss /= n;
    init.train_oa = static_cast<double>(correct) / n;
    record(init);
  }

  const auto batch = static_cast<std::size_t>(cfg.train.batch_size);
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      std::span<const std::size_t> items(order.data() + start, len);
      BatchOutcome<T> outcome;
      try {
        outcome = sharded_batch(tm.weights, mc, data, items, T(1) / static_cast<T>(len), threads);
      } catch (const NumericError& e) {
        const fs::path dump = out_dir / "nan_dump.json";
        std::vector<std::size_t> pixels;
        for (auto i : items) pixels.push_back(data.pixels[i]);
        nlohmann::json j = {{"epoch", epoch}, {"batch_start", start}, {"pixels", pixels}, {"error", e.what()}};
        std::ofstream(dump) << j.dump(1) << "\n";
        io::Checkpoint ck;
        for (auto i : items) {
          ck.tensors.emplace("hsi." + std::to_string(data.pixels[i]), as_any(data.hsi[i]));
          ck.tensors.emplace("aux." + std::to_string(data.pixels[i]), as_any(data.aux[i]));
        }
        ck.metadata = j;
        io::save_checkpoint((out_dir / "nan_batch.msfc").string(), ck);
        throw NumericError("non-finite value in epoch " + std::to_string(epoch) + " (" + e.what() +
                           "); batch dumped to " + dump.string());
      }
      loss_sum += outcome.loss_sum;
      correct += outcome.correct;
      opt.step(tm.weights, outcome.grads);
    }
    EpochRecord r{epoch, loss_sum / n, static_cast<double>(correct) / n};
    record(r);
    if (cfg.train.save_every > 0 && epoch % cfg.train.save_every == 0) {
      save_trained_model(out_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".msfc"), tm, epoch, cfg.seed);
    }
    if (cfg.train.early_stop_oa > 0 && r.train_oa >= cfg.train.early_stop_oa) {
      result.early_stopped = true;
      break;
    }
  }
  save_trained_model(result.checkpoint, tm, result.history.back().epoch, cfg.seed);
  return result;
}

template <typename T>
Metrics evaluate_typed(const fs::path& checkpoint, const DatasetManifest& manifest, Split split,
                       std::size_t threads) {
  const auto tm = load_trained_model<T>(checkpoint);
  if (static_cast<std::size_t>(tm.cfg.classes) != manifest.classes() ||
      static_cast<std::size_t>(tm.cfg.aux_channels) != manifest.aux_channels || tm.pca.bands() != manifest.bands) {
    throw DimensionError("checkpoint " + checkpoint.string() + " does not match the manifest dimensions");
  }
  const Scene scene = load_scene(manifest);
  const Tensor<double> reduced = pca_apply(tm.pca, scene.hsi);
  const auto& pixels = split == Split::Train ? manifest.train : manifest.test;
  const auto data =
      extract_patches<T>(reduced, scene.aux, scene.labels, pixels, static_cast<std::size_t>(tm.cfg.patch));
  const auto predicted = predict(tm, data, threads);
  return metrics_from_predictions(manifest.classes(), data.labels, predicted);
}

}  // namespace

template <typename T>
Optimizer<T>::Optimizer(const TrainConfig& cfg, const WeightStore<T>& weights) : cfg_(cfg) {
  for (const auto& [name, t] : weights.entries()) {
    m_[name].assign(t.size(), 0.0);
    v_[name].assign(t.size(), 0.0);
  }
}

template <typename T>
void Optimizer<T>::step(WeightStore<T>& weights, const std::map<std::string, Tensor<T>>& grads) {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, w] : weights.entries()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = static_cast<T>(static_cast<double>(w[k]) - cfg_.lr * static_cast<double>(g[k]));
      }
      continue;
    }
    auto& m = m_[name];
    auto& v = v_[name];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      w[k] = static_cast<T>(static_cast<double>(w[k]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
    }
  }
}

template <typename T>
std::vector<std::size_t> predict(const TrainedModel<T>& model, const PatchSet<T>& patches, std::size_t threads) {
  std::vector<std::size_t> out(patches.labels.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    NoGradGuard guard;
    const auto w = Weights<T>::constants(model.weights);
    for (std::size_t i = begin; i < end; ++i) {
      const auto logits =
          model::forward(Var<T>::constant(patches.hsi[i]), Var<T>::constant(patches.aux[i]), w, model.cfg);
      out[i] = argmax(logits.value());
    }
  };
  const std::size_t shards = std::max<std::size_t>(1, std::min(threads, out.size()));
  if (shards == 1) {
    run(0, out.size());
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t per = (out.size() + shards - 1) / shards;
  for (std::size_t s = 0; s < shards; ++s) {
    pool.emplace_back(run, std::min(out.size(), s * per), std::min(out.size(), (s + 1) * per));
  }
  return out;
}

template <typename T>
void save_trained_model(const fs::path& path, const TrainedModel<T>& model, int epoch, std::uint64_t seed) {
  io::Checkpoint ck;
  ck.metadata = {{"format", "msfmamba-checkpoint"},
                 {"model", to_json(model.cfg)},
                 {"dtype", sizeof(T) == 8 ? "f64" : "f32"},
                 {"epoch", epoch},
                 {"seed", seed}};
  for (const auto& [name, t] : model.weights.entries()) ck.tensors.emplace(name, t);
  ck.tensors.emplace("pca.mean", model.pca.mean);
  ck.tensors.emplace("pca.basis", model.pca.basis);
  ck.tensors.emplace("pca.explained_variance", model.pca.explained_variance);
  io::save_checkpoint(path.string(), ck);
}

template <typename T>
TrainedModel<T> load_trained_model(const fs::path& checkpoint) {
  auto ck = io::load_checkpoint(checkpoint.string());
  TrainedModel<T> tm;
  try {
    tm.cfg = model_config_from_json(ck.metadata.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(checkpoint.string() + ": checkpoint metadata lacks a model config");
  }
  auto as_double = [&](const std::string& name) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw IoError(checkpoint.string() + ": missing " + name);
    if (auto* d = std::get_if<Tensor<double>>(&it->second)) return *d;
    if (auto* f = std::get_if<Tensor<float>>(&it->second)) return f->template cast<double>();
    throw IoError(checkpoint.string() + ": " + name + " is not floating point");
  };
  tm.pca.mean = as_double("pca.mean");
  tm.pca.basis = as_double("pca.basis");
  tm.pca.explained_variance = as_double("pca.explained_variance");
  const auto expected = model::init_weights<T>(tm.cfg, 0);
  for (const auto& [name, t] : expected.entries()) {
    const Tensor<double> loaded = as_double(name);
    if (loaded.shape() != t.shape()) throw DimensionError(checkpoint.string() + ": shape mismatch for " + name);
    tm.weights.add(name, loaded.template cast<T>());
  }
  return tm;
}

TrainResult train(const DatasetManifest& manifest, const RunConfig& cfg, const fs::path& out_dir, std::ostream* log) {
  if (cfg.train.use_f64) return train_typed<double>(manifest, cfg, out_dir, log);
  return train_typed<float>(manifest, cfg, out_dir, log);
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ConfigError("split must be train or test, got '" + name + "'");
}

Metrics evaluate(const fs::path& checkpoint, const DatasetManifest& manifest, Split split, std::size_t threads) {
  const auto ck = io::load_checkpoint(checkpoint.string());
  const std::string dtype = ck.metadata.value("dtype", "f32");
  if (dtype == "f64") return evaluate_typed<double>(checkpoint, manifest, split, threads);
  return evaluate_typed<float>(checkpoint, manifest, split, threads);
}

template class Optimizer<float>;
template class Optimizer<double>;
template std::vector<std::size_t> predict(const TrainedModel<float>&, const PatchSet<float>&, std::size_t);
template std::vector<std::size_t> predict(const TrainedModel<double>&, const PatchSet<double>&, std::size_t);
template void save_trained_model(const fs::path&, const TrainedModel<float>&, int, std::uint64_t);
template void save_trained_model(const fs::path&, const TrainedModel<double>&, int, std::uint64_t);
template TrainedModel<float> load_trained_model(const fs::path&);
template TrainedModel<double> load_trained_model(const fs::path&);

}  // namespace msf
