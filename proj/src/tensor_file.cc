#include "dsvqa/tensor_file.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace dsvqa {

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'V', 'L', 'T'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

template <typename T>
void encode_payload(const Tensor<T>& t, std::vector<std::uint8_t>& out) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : t.data()) put_le<Bits>(out, std::bit_cast<Bits>(v));
}

template <typename T>
Tensor<T> decode_payload(Shape shape, const std::uint8_t* p) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<T> data(numel_of(shape));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<T>(get_le<Bits>(p + i * sizeof(T)));
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

DType dtype_of(const AnyTensor& t) {
  return std::holds_alternative<Tensor<float>>(t) ? DType::kF32 : DType::kF64;
}

const Shape& shape_of(const AnyTensor& t) {
  return std::visit([](const auto& x) -> const Shape& { return x.shape(); }, t);
}

std::vector<std::uint8_t> encode_tensor(const AnyTensor& t) {
  const Shape& shape = shape_of(t);
  if (shape.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw FormatError("tensor rank " + std::to_string(shape.size()) + " exceeds 255");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of(t)));
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) {
    if (d == 0 || d > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("tensor extent " + std::to_string(d) + " is not storable");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  std::visit([&](const auto& x) { encode_payload(x, out); }, t);
  return out;
}

AnyTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 7;
  if (bytes.size() < kHeader) {
    throw FormatError("truncated header: " + std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected DVLT");
  const std::uint8_t version = bytes[4];
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const std::uint8_t code = bytes[5];
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code));
  const std::size_t ndim = bytes[6];
  if (bytes.size() < kHeader + 4 * ndim) {
    throw FormatError("truncated header: expected " + std::to_string(ndim) + " extents");
  }
  Shape shape(ndim);
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    shape[i] = get_le<std::uint32_t>(bytes.data() + kHeader + 4 * i);
    if (shape[i] == 0) throw FormatError("zero extent on axis " + std::to_string(i));
    if (count > std::numeric_limits<std::size_t>::max() / 8 / shape[i]) {
      throw FormatError("tensor extents overflow");
    }
    count *= shape[i];
  }
  const std::size_t width = code == 0 ? 4 : 8;
  const std::size_t offset = kHeader + 4 * ndim;
  const std::size_t expected = count * width;
  if (bytes.size() - offset != expected) {
    throw FormatError("payload size mismatch: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size() - offset));
  }
  if (code == 0) return decode_payload<float>(std::move(shape), bytes.data() + offset);
  return decode_payload<double>(std::move(shape), bytes.data() + offset);
}

void write_tensor(const AnyTensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

AnyTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace dsvqa
