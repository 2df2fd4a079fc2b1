#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edgedet/error.hpp"

namespace edgedet {

using TensorId = int;

enum class DType { f32, i8, i32 };

inline constexpr std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::i8: return 1;
    case DType::i32: return 4;
  }
  return 0;
}

inline constexpr std::string_view to_string(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::i8: return "i8";
    case DType::i32: return "i32";
  }
  return "?";
}

inline DType dtype_from_string(std::string_view s) {
  if (s == "f32") return DType::f32;
  if (s == "i8") return DType::i8;
  if (s == "i32") return DType::i32;
  throw DataError("unknown dtype '" + std::string(s) + "'");
}

// NCHW activation shape. A zero entry means "not inferred yet".
struct Shape {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  std::int64_t elements() const { return n * c * h * w; }
  bool complete() const { return n > 0 && c > 0 && h > 0 && w > 0; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class QuantScheme { per_tensor_affine, per_channel_symmetric };

struct QuantParams {
  QuantScheme scheme = QuantScheme::per_tensor_affine;
  // One entry for per-tensor, one per output channel for per-channel.
  std::vector<float> scale;
  int zero_point = 0;

  static QuantParams affine(float scale, int zero_point) {
    return {QuantScheme::per_tensor_affine, {scale}, zero_point};
  }
  static QuantParams symmetric(std::vector<float> scales) {
    return {QuantScheme::per_channel_symmetric, std::move(scales), 0};
  }

  float scale_at(std::size_t channel) const {
    return scale.size() == 1 ? scale[0] : scale.at(channel);
  }

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct TensorSpec {
  TensorId id = -1;
  DType dtype = DType::f32;
  Shape shape;
  std::optional<QuantParams> quant;

  std::size_t byte_size() const {
    return static_cast<std::size_t>(shape.elements()) * dtype_size(dtype);
  }
  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

using TensorData =
    std::variant<std::vector<float>, std::vector<std::int8_t>, std::vector<std::int32_t>>;

inline DType dtype_of(const TensorData& d) {
  return static_cast<DType>(d.index());
}

inline std::size_t size_of(const TensorData& d) {
  return std::visit([](const auto& v) { return v.size(); }, d);
}

// Constant weight tensor owned by a node (kernel, bias, BN vectors).
struct Constant {
  std::vector<std::int64_t> dims;
  TensorData data;
  std::optional<QuantParams> quant;

  DType dtype() const { return dtype_of(data); }
  std::int64_t elements() const {
    return std::accumulate(dims.begin(), dims.end(), std::int64_t{1},
                           std::multiplies<>());
  }
  std::size_t byte_size() const {
    return static_cast<std::size_t>(elements()) * dtype_size(dtype());
  }

  template <typename T>
  const std::vector<T>& values() const {
    return std::get<std::vector<T>>(data);
  }
  template <typename T>
  std::vector<T>& values() {
    return std::get<std::vector<T>>(data);
  }

  static Constant f32(std::vector<std::int64_t> dims, std::vector<float> v) {
    return {std::move(dims), std::move(v), std::nullopt};
  }

  friend bool operator==(const Constant&, const Constant&) = default;
};

// Runtime activation buffer, NCHW row-major.
struct TensorBuf {
  TensorSpec spec;
  TensorData data;

  static TensorBuf zeros(Shape shape, DType dtype = DType::f32) {
    TensorBuf t;
    t.spec.shape = shape;
    t.spec.dtype = dtype;
    auto n = static_cast<std::size_t>(shape.elements());
    switch (dtype) {
      case DType::f32: t.data = std::vector<float>(n, 0.0f); break;
      case DType::i8: t.data = std::vector<std::int8_t>(n, 0); break;
      case DType::i32: t.data = std::vector<std::int32_t>(n, 0); break;
    }
    return t;
  }

  static TensorBuf from(Shape shape, std::vector<float> values) {
    if (static_cast<std::int64_t>(values.size()) != shape.elements())
      throw InvalidArgument("tensor data length " + std::to_string(values.size()) +
                            " does not match shape " + shape.str());
    TensorBuf t;
    t.spec.shape = shape;
    t.spec.dtype = DType::f32;
    t.data = std::move(values);
    return t;
  }

  template <typename T>
  const std::vector<T>& values() const {
    return std::get<std::vector<T>>(data);
  }
  template <typename T>
  std::vector<T>& values() {
    return std::get<std::vector<T>>(data);
  }
  const std::vector<float>& f32() const { return values<float>(); }
  std::vector<float>& f32() { return values<float>(); }
  const std::vector<std::int8_t>& i8() const { return values<std::int8_t>(); }
  std::vector<std::int8_t>& i8() { return values<std::int8_t>(); }

  const Shape& shape() const { return spec.shape; }
};

}  // namespace edgedet
