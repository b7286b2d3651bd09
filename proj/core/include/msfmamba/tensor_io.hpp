#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "msfmamba/tensor.hpp"

namespace msf::io {

// TensorFile layout, all integers little-endian:
//   magic "MSFT" | version u16 = 1 | dtype u8 | ndim u8 | dims ndim x u32 | payload
// dtype 1 = f32, 2 = f64, 3 = u16 (label maps). Payload is little-endian row-major.
inline constexpr std::uint16_t kTensorFileVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U16 = 3 };

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, Tensor<std::uint16_t>>;

void write_tensor(std::ostream& out, const AnyTensor& tensor);
AnyTensor read_tensor(std::istream& in);

void save_tensor(const std::string& path, const AnyTensor& tensor);
AnyTensor load_tensor(const std::string& path);

/// Loads a floating tensor of either width and converts it to T.
template <typename T>
Tensor<T> load_float_tensor(const std::string& path);

Tensor<std::uint16_t> load_label_map(const std::string& path);

// Checkpoint bundle: a sequence of named TensorFile records plus JSON metadata.
//   magic "MSFC" | version u16 = 1 | metadata length u32 | metadata (UTF-8 JSON)
//   | entry count u32 | per entry: name length u16, name bytes, TensorFile record
struct Checkpoint {
  nlohmann::json metadata;
  std::map<std::string, AnyTensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace msf::io
