#include "msfmamba/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace msf::io {

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!in) throw IoError("unexpected end of file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return value;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;

template <typename T>
void write_payload(std::ostream& out, const Tensor<T>& t) {
  for (T v : t.data()) put_le(out, std::bit_cast<Bits<T>>(v));
}

template <typename T>
Tensor<T> read_payload(std::istream& in, Shape shape) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = std::bit_cast<T>(get_le<Bits<T>>(in));
  return t;
}

template <typename T>
DType dtype_of();
template <>
DType dtype_of<float>() { return DType::F32; }
template <>
DType dtype_of<double>() { return DType::F64; }
template <>
DType dtype_of<std::uint16_t>() { return DType::U16; }

}  // namespace

void write_tensor(std::ostream& out, const AnyTensor& tensor) {
  std::visit(
      [&out](const auto& t) {
        using T = typename std::decay_t<decltype(t)>::value_type;
        if (t.empty()) throw IoError("cannot write an empty tensor");
        if (t.rank() > 255) throw IoError("tensor rank exceeds 255");
        out.write("MSFT", 4);
        put_le<std::uint16_t>(out, kTensorFileVersion);
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) {
          if (d > 0xFFFFFFFFu) throw IoError("tensor dimension exceeds u32");
          put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        write_payload(out, t);
      },
      tensor);
  if (!out) throw IoError("tensor write failed");
}

AnyTensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MSFT", 4) != 0) throw IoError("bad TensorFile magic");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kTensorFileVersion) throw IoError("unsupported TensorFile version " + std::to_string(version));
  const auto dtype = get_le<std::uint8_t>(in);
  const auto ndim = get_le<std::uint8_t>(in);
  if (ndim == 0) throw IoError("TensorFile with zero dimensions");
  Shape shape(ndim);
  for (auto& d : shape) {
    d = get_le<std::uint32_t>(in);
    if (d == 0) throw IoError("TensorFile with a zero-length dimension");
  }
  switch (static_cast<DType>(dtype)) {
    case DType::F32: return read_payload<float>(in, std::move(shape));
    case DType::F64: return read_payload<double>(in, std::move(shape));
    case DType::U16: return read_payload<std::uint16_t>(in, std::move(shape));
  }
  throw IoError("unknown TensorFile dtype code " + std::to_string(dtype));
}

void save_tensor(const std::string& path, const AnyTensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_tensor(out, tensor);
}

AnyTensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_tensor(in);
}

template <typename T>
Tensor<T> load_float_tensor(const std::string& path) {
  auto any = load_tensor(path);
  if (auto* f = std::get_if<Tensor<float>>(&any)) return f->template cast<T>();
  if (auto* d = std::get_if<Tensor<double>>(&any)) return d->template cast<T>();
  throw IoError(path + " does not hold a floating-point tensor");
}

template Tensor<float> load_float_tensor(const std::string&);
template Tensor<double> load_float_tensor(const std::string&);

Tensor<std::uint16_t> load_label_map(const std::string& path) {
  auto any = load_tensor(path);
  if (auto* l = std::get_if<Tensor<std::uint16_t>>(&any)) return std::move(*l);
  throw IoError(path + " does not hold a u16 label map");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("MSFC", 4);
  put_le<std::uint16_t>(out, 1);
  const std::string meta = ckpt.metadata.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.size() > 0xFFFF) throw IoError("tensor name too long: " + name.substr(0, 32));
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, tensor);
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MSFC", 4) != 0) throw IoError(path + ": bad checkpoint magic");
  if (get_le<std::uint16_t>(in) != 1) throw IoError(path + ": unsupported checkpoint version");
  Checkpoint ckpt;
  std::string meta(get_le<std::uint32_t>(in), '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!in) throw IoError(path + ": truncated metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad metadata: " + e.what());
  }
  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_le<std::uint16_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    if (!in) throw IoError(path + ": truncated entry name");
    ckpt.tensors.emplace(std::move(name), read_tensor(in));
  }
  return ckpt;
}

}  // namespace msf::io
