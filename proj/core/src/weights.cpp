#include "msfmamba/weights.hpp"

namespace msf {

template <typename T>
void WeightStore<T>::add(const std::string& name, Tensor<T> value) {
  if (!entries_.emplace(name, std::move(value)).second) throw ConfigError("duplicate weight name " + name);
}

template <typename T>
const Tensor<T>& WeightStore<T>::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("missing weight " + name);
  return it->second;
}

template <typename T>
Tensor<T>& WeightStore<T>::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("missing weight " + name);
  return it->second;
}

template <typename T>
std::size_t WeightStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

template <typename T>
Weights<T> Weights<T>::leaves(const WeightStore<T>& store) {
  Weights w;
  for (const auto& [name, t] : store.entries()) w.vars_.emplace(name, Var<T>::leaf(t));
  return w;
}

template <typename T>
Weights<T> Weights<T>::constants(const WeightStore<T>& store) {
  Weights w;
  for (const auto& [name, t] : store.entries()) w.vars_.emplace(name, Var<T>::constant(t));
  return w;
}

template <typename T>
Weights<T> Weights<T>::from_vars(std::map<std::string, Var<T>> vars) {
  Weights w;
  w.vars_ = std::move(vars);
  return w;
}

template <typename T>
const Var<T>& Weights<T>::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("missing weight " + name);
  return it->second;
}

template <typename T>
SsmParams<T> Weights<T>::ssm(const std::string& prefix) const {
  return {(*this)[prefix + ".A"],   (*this)[prefix + ".D"],    (*this)[prefix + ".W_B"],
          (*this)[prefix + ".W_C"], (*this)[prefix + ".W_dt"], (*this)[prefix + ".b_dt"]};
}

template class WeightStore<float>;
template class WeightStore<double>;
template class Weights<float>;
template class Weights<double>;

}  // namespace msf
