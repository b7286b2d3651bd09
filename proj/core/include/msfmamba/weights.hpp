#pragma once

#include <map>
#include <string>

#include "msfmamba/ssm.hpp"

namespace msf {

/// Named weight tensors, ordered by name. Names mirror the module tree,
/// e.g. `module0.mspa_h.route2.W_B`.
template <typename T>
class WeightStore {
 public:
  void add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  const std::map<std::string, Tensor<T>>& entries() const { return entries_; }
  std::map<std::string, Tensor<T>>& entries() { return entries_; }
  std::size_t scalar_count() const;

  template <typename U>
  WeightStore<U> cast() const {
    WeightStore<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, Tensor<T>> entries_;
};

/// Tape view of a WeightStore: each tensor wrapped as a leaf (for training)
/// or a constant (for inference).
template <typename T>
class Weights {
 public:
  static Weights leaves(const WeightStore<T>& store);
  static Weights constants(const WeightStore<T>& store);
  static Weights from_vars(std::map<std::string, Var<T>> vars);

  const Var<T>& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  const std::map<std::string, Var<T>>& vars() const { return vars_; }

  /// Reads `<prefix>.A`, `.D`, `.W_B`, `.W_C`, `.W_dt`, `.b_dt`.
  SsmParams<T> ssm(const std::string& prefix) const;

 private:
  std::map<std::string, Var<T>> vars_;
};

}  // namespace msf
