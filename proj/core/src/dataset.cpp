#include "msfmamba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "msfmamba/rng.hpp"
#include "msfmamba/tensor_io.hpp"

namespace msf {

namespace fs = std::filesystem;

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.dir = path.parent_path();
    m.hsi = j.at("hsi").get<std::string>();
    m.aux = j.at("aux").get<std::string>();
    m.labels = j.at("labels").get<std::string>();
    m.height = j.at("height").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    m.bands = j.at("bands").get<std::size_t>();
    m.aux_channels = j.at("aux_channels").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.train = j.at("train").get<std::vector<std::size_t>>();
    m.test = j.at("test").get<std::vector<std::size_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  nlohmann::json j = {{"format", "msfmamba-manifest"},
                      {"version", 1},
                      {"hsi", m.hsi},
                      {"aux", m.aux},
                      {"labels", m.labels},
                      {"height", m.height},
                      {"width", m.width},
                      {"bands", m.bands},
                      {"aux_channels", m.aux_channels},
                      {"class_names", m.class_names},
                      {"train", m.train},
                      {"test", m.test}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(1) << "\n";
}

void validate_manifest(const DatasetManifest& m, const Tensor<std::uint16_t>& labels) {
  if (labels.shape() != Shape{m.height, m.width}) throw DimensionError("label map does not match manifest size");
  if (m.classes() < 2) throw ConfigError("manifest needs at least two classes");
  std::set<std::size_t> seen;
  auto check = [&](const std::vector<std::size_t>& split, const char* name) {
    for (auto p : split) {
      if (p >= m.height * m.width) throw ConfigError(std::string(name) + " index out of range");
      const auto lab = labels[p];
      if (lab == 0) throw ConfigError(std::string(name) + " index " + std::to_string(p) + " is unlabeled");
      if (lab > m.classes()) throw ConfigError("label " + std::to_string(lab) + " exceeds class count");
      if (!seen.insert(p).second) {
        throw ConfigError("pixel " + std::to_string(p) + " appears twice across train/test");
      }
    }
  };
  check(m.train, "train");
  check(m.test, "test");
}

DatasetManifest synth_generate(const fs::path& out_dir, const SynthOptions& o) {
  if (o.classes < 2) throw ConfigError("synth: need at least two classes");
  if (o.classes > 0xFFFE) throw ConfigError("synth: too many classes");
  if (o.bands < 1 || o.aux_channels < 1 || o.patch < 1) throw ConfigError("synth: bands, aux and patch must be positive");
  if (o.n_train < o.classes || o.n_test < o.classes) {
    throw ConfigError("synth: impossible split, every class needs at least one train and one test pixel");
  }
  if (o.noise < 0) throw ConfigError("synth: noise must be non-negative");
  Rng rng(o.seed);
  const std::size_t K = o.classes;
  const std::size_t need = (o.n_train + K - 1) / K + (o.n_test + K - 1) / K;
  const std::size_t stripe = std::max<std::size_t>(2 * o.patch, 4);
  const std::size_t H = std::max<std::size_t>((need * 5 / 4 + stripe - 1) / stripe, o.patch);
  const std::size_t W = K * stripe + (K + 1);  // unlabeled separator columns at both edges and between stripes

  // Class k spectral signature: offset plus three random sinusoids over the band axis.
  const std::size_t B = o.bands;
  std::vector<std::vector<double>> signature(K + 1, std::vector<double>(B));
  for (auto& sig : signature) {
    const double offset = rng.uniform(0.3, 0.7);
    double amp[3], freq[3], phase[3];
    for (int m = 0; m < 3; ++m) {
      amp[m] = rng.uniform(0.05, 0.2);
      freq[m] = rng.uniform(0.5, 3.0);
      phase[m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    for (std::size_t b = 0; b < B; ++b) {
      const double t = static_cast<double>(b) / static_cast<double>(B);
      double v = offset;
      for (int m = 0; m < 3; ++m) v += amp[m] * std::sin(2.0 * std::numbers::pi * freq[m] * t + phase[m]);
      sig[b] = v;
    }
  }
  // Aux texture: per-class elevation plus an oriented ramp/wave.
  std::vector<double> elevation(K + 1), angle(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    elevation[k] = static_cast<double>(k) / static_cast<double>(K);
    angle[k] = std::numbers::pi * static_cast<double>(k) / static_cast<double>(K + 1);
  }

  Tensor<float> hsi(Shape{H, W, B});
  Tensor<float> aux(Shape{H, W, o.aux_channels});
  Tensor<std::uint16_t> labels(Shape{H, W});
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      std::size_t k = 0;  // 0 = unlabeled separator
      if (j % (stripe + 1) != 0) k = j / (stripe + 1) + 1;
      labels[i * W + j] = static_cast<std::uint16_t>(k);
      const auto& sig = signature[k];
      for (std::size_t b = 0; b < B; ++b) {
        hsi[(i * W + j) * B + b] = static_cast<float>(sig[b] + o.noise * rng.normal());
      }
      for (std::size_t a = 0; a < o.aux_channels; ++a) {
        const double phase = static_cast<double>(a) * 0.7;
        const double u = static_cast<double>(i) * std::cos(angle[k]) + static_cast<double>(j) * std::sin(angle[k]);
        const double texture = 0.25 * std::sin(2.0 * std::numbers::pi * u / static_cast<double>(stripe) + phase);
        aux[(i * W + j) * o.aux_channels + a] = static_cast<float>(elevation[k] + texture + o.noise * rng.normal());
      }
    }
  }

  DatasetManifest m;
  m.dir = out_dir;
  m.hsi = "hsi.msft";
  m.aux = "aux.msft";
  m.labels = "labels.msft";
  m.height = H;
  m.width = W;
  m.bands = B;
  m.aux_channels = o.aux_channels;
  for (std::size_t k = 0; k < K; ++k) m.class_names.push_back("class" + std::to_string(k + 1));
  for (std::size_t k = 1; k <= K; ++k) {
    std::vector<std::size_t> pool;
    for (std::size_t p = 0; p < H * W; ++p) {
      if (labels[p] == k) pool.push_back(p);
    }
    rng.shuffle(pool.begin(), pool.end());
    const std::size_t n_tr = o.n_train / K + (k - 1 < o.n_train % K ? 1 : 0);
    const std::size_t n_te = o.n_test / K + (k - 1 < o.n_test % K ? 1 : 0);
    if (n_tr + n_te > pool.size()) throw ConfigError("synth: class region too small for the requested split");
    m.train.insert(m.train.end(), pool.begin(), pool.begin() + static_cast<long>(n_tr));
    m.test.insert(m.test.end(), pool.begin() + static_cast<long>(n_tr),
                  pool.begin() + static_cast<long>(n_tr + n_te));
  }
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.test.begin(), m.test.end());

  fs::create_directories(out_dir);
  io::save_tensor((out_dir / m.hsi).string(), hsi);
  io::save_tensor((out_dir / m.aux).string(), aux);
  io::save_tensor((out_dir / m.labels).string(), labels);
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

Scene load_scene(const DatasetManifest& m) {
  Scene s;
  s.hsi = io::load_float_tensor<double>(m.resolve(m.hsi).string());
  s.aux = io::load_float_tensor<double>(m.resolve(m.aux).string());
  s.labels = io::load_label_map(m.resolve(m.labels).string());
  if (s.hsi.shape() != Shape{m.height, m.width, m.bands}) throw DimensionError("HSI cube does not match manifest");
  if (s.aux.shape() != Shape{m.height, m.width, m.aux_channels}) throw DimensionError("aux cube does not match manifest");
  validate_manifest(m, s.labels);
  return s;
}

std::size_t mirror_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long N = static_cast<long>(n);
  const long period = 2 * (N - 1);
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < N ? r : period - r);
}

template <typename T>
PatchSet<T> extract_patches(const Tensor<double>& hsi, const Tensor<double>& aux, const Tensor<std::uint16_t>& labels,
                            const std::vector<std::size_t>& pixels, std::size_t patch) {
  if (hsi.rank() != 3 || aux.rank() != 3 || hsi.dim(0) != aux.dim(0) || hsi.dim(1) != aux.dim(1)) {
    throw DimensionError("extract_patches: cubes must be [H,W,*] with equal spatial size");
  }
  const std::size_t H = hsi.dim(0), W = hsi.dim(1), Ch = hsi.dim(2), Ca = aux.dim(2);
  const long half = static_cast<long>(patch / 2);
  PatchSet<T> set;
  for (auto p : pixels) {
    if (p >= H * W) throw DimensionError("extract_patches: pixel index out of range");
    const long ci = static_cast<long>(p / W), cj = static_cast<long>(p % W);
    Tensor<T> hp(Shape{patch, patch, Ch}), ap(Shape{patch, patch, Ca});
    for (std::size_t di = 0; di < patch; ++di) {
      const std::size_t si = mirror_index(ci - half + static_cast<long>(di), H);
      for (std::size_t dj = 0; dj < patch; ++dj) {
        const std::size_t sj = mirror_index(cj - half + static_cast<long>(dj), W);
        for (std::size_t c = 0; c < Ch; ++c) hp.at(di, dj, c) = static_cast<T>(hsi.at(si, sj, c));
        for (std::size_t c = 0; c < Ca; ++c) ap.at(di, dj, c) = static_cast<T>(aux.at(si, sj, c));
      }
    }
    const auto lab = labels[p];
    if (lab == 0) throw ConfigError("extract_patches: pixel " + std::to_string(p) + " is unlabeled");
    set.hsi.push_back(std::move(hp));
    set.aux.push_back(std::move(ap));
    set.labels.push_back(static_cast<std::size_t>(lab) - 1);
    set.pixels.push_back(p);
  }
  return set;
}

template PatchSet<float> extract_patches(const Tensor<double>&, const Tensor<double>&, const Tensor<std::uint16_t>&,
                                         const std::vector<std::size_t>&, std::size_t);
template PatchSet<double> extract_patches(const Tensor<double>&, const Tensor<double>&, const Tensor<std::uint16_t>&,
                                          const std::vector<std::size_t>&, std::size_t);

}  // namespace msf
