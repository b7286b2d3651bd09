#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msfmamba/config.hpp"
#include "msfmamba/tensor.hpp"

namespace msf {

/// On-disk description of a multi-source scene. Paths are relative to the
/// manifest's directory. Pixel indices are row-major (i * width + j).
///
/// JSON schema:
///   { "format": "msfmamba-manifest", "version": 1,
///     "hsi": str, "aux": str, "labels": str,
///     "height": int, "width": int, "bands": int, "aux_channels": int,
///     "class_names": [str], "train": [int], "test": [int] }
struct DatasetManifest {
  std::filesystem::path dir;
  std::string hsi;
  std::string aux;
  std::string labels;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::size_t aux_channels = 0;
  std::vector<std::string> class_names;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t classes() const { return class_names.size(); }
  std::filesystem::path resolve(const std::string& rel) const { return dir / rel; }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Checks that indexed pixels are labeled, within the map, and that the splits are disjoint.
void validate_manifest(const DatasetManifest& manifest, const Tensor<std::uint16_t>& labels);

struct SynthOptions {
  std::size_t classes = 3;
  std::size_t patch = 8;
  std::size_t bands = 48;
  std::size_t aux_channels = 1;
  std::size_t n_train = 300;
  std::size_t n_test = 300;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Writes a labeled scene into `out_dir` and returns its manifest. Each class
/// owns a vertical stripe with its own smooth spectral signature and its own
/// oriented elevation texture in the aux channels; stripes are separated by
/// unlabeled columns. Per-class split sizes differ by at most one.
DatasetManifest synth_generate(const std::filesystem::path& out_dir, const SynthOptions& options);

/// Loaded scene with the HSI cube already projected onto principal components.
struct Scene {
  Tensor<double> hsi;  // [H, W, Np] after PCA, or raw bands before
  Tensor<double> aux;  // [H, W, aux]
  Tensor<std::uint16_t> labels;
};

Scene load_scene(const DatasetManifest& manifest);

template <typename T>
struct PatchSet {
  std::vector<Tensor<T>> hsi;
  std::vector<Tensor<T>> aux;
  std::vector<std::size_t> labels;  // zero-based class ids
  std::vector<std::size_t> pixels;
};

/// Patches of `patch` x `patch` centered on each pixel (center at offset patch / 2),
/// with mirror padding at the borders.
template <typename T>
PatchSet<T> extract_patches(const Tensor<double>& hsi, const Tensor<double>& aux, const Tensor<std::uint16_t>& labels,
                            const std::vector<std::size_t>& pixels, std::size_t patch);

/// Reflects an out-of-range coordinate back into [0, n).
std::size_t mirror_index(long i, std::size_t n);

}  // namespace msf
