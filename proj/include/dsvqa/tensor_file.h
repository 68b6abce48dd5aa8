#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "dsvqa/tensor.h"

namespace dsvqa {

/// Malformed or unreadable tensor file.
class FormatError : public Error {
 public:
  using Error::Error;
};

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

// TensorFile layout (all integers little-endian):
//   "DVLT" | version u8 (=1) | dtype u8 (0 f32, 1 f64) | ndim u8 |
//   ndim x u32 extents | row-major payload
inline constexpr std::uint8_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const AnyTensor& t);
AnyTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const AnyTensor& t, const std::filesystem::path& path);
AnyTensor read_tensor(const std::filesystem::path& path);

/// Reads a tensor file and converts it to T.
template <typename T>
Tensor<T> read_tensor_as(const std::filesystem::path& path) {
  return std::visit([](const auto& t) { return t.template cast<T>(); }, read_tensor(path));
}

DType dtype_of(const AnyTensor& t);
const Shape& shape_of(const AnyTensor& t);

}  // namespace dsvqa
