#include "msfmamba/tensor.hpp"

#include <algorithm>
#include <cstring>

namespace msf {

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
T max_abs(const Tensor<T>& t) {
  T m = 0;
  for (T v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
double max_relative_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("relative error between " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    const double denom = std::max({1.0, std::abs(x), std::abs(y)});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

template bool bitwise_equal(const Tensor<float>&, const Tensor<float>&);
template bool bitwise_equal(const Tensor<double>&, const Tensor<double>&);
template float max_abs(const Tensor<float>&);
template double max_abs(const Tensor<double>&);
template double max_relative_error(const Tensor<float>&, const Tensor<float>&);
template double max_relative_error(const Tensor<double>&, const Tensor<double>&);

}  // namespace msf
