// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chanq/error.hpp"

namespace chanq {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

/// Element type tags used by the QTSR tensor file format.
enum class DType : std::uint8_t { f32 = 0, i8 = 1, u8 = 2, i32 = 3 };

inline const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::i8: return "i8";
    case DType::u8: return "u8";
    case DType::i32: return "i32";
  }
  return "?";
}

/// Dense row-major array. Four-dimensional tensors use NCHW layout.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape dims, T fill = T{})
      : dims_(std::move(dims)), data_(element_count(dims_), fill) {
    check_dims();
  }

  BasicTensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != element_count(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + to_string(dims_));
    }
  }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  /// Number of samples (leading axis).
  std::size_t batch() const noexcept { return dims_.empty() ? 0 : dims_[0]; }
  /// Channel axis extent (axis 1); 1 for rank-1 tensors.
  std::size_t channels() const noexcept { return dims_.size() < 2 ? 1 : dims_[1]; }
  /// Elements per (sample, channel) plane.
  std::size_t plane() const noexcept {
    std::size_t p = 1;
    for (std::size_t i = 2; i < dims_.size(); ++i) p *= dims_[i];
    return p;
  }

  /// Contiguous values of channel `c` in sample `n`.
  std::span<const T> channel_plane(std::size_t n, std::size_t c) const noexcept {
    const std::size_t p = plane();
    return std::span<const T>(data_).subspan((n * channels() + c) * p, p);
  }

  /// Copies samples [begin, begin+count) along axis 0.
  BasicTensor slice_batch(std::size_t begin, std::size_t count) const {
    if (begin + count > batch()) throw ShapeError("batch slice out of range");
    Shape d = dims_;
    d[0] = count;
    const std::size_t stride = batch() ? size() / batch() : 0;
    std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                       data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
    return BasicTensor(std::move(d), std::move(out));
  }

  /// Gathers the listed samples along axis 0, in the listed order.
  BasicTensor gather_batch(std::span<const std::size_t> indices) const {
    Shape d = dims_;
    d[0] = indices.size();
    const std::size_t stride = batch() ? size() / batch() : 0;
    std::vector<T> out;
    out.reserve(indices.size() * stride);
    for (std::size_t idx : indices) {
      if (idx >= batch()) throw ShapeError("batch index out of range");
      auto first = data_.begin() + static_cast<std::ptrdiff_t>(idx * stride);
      out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(stride));
    }
    return BasicTensor(std::move(d), std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(dims_));
    }
  }

  Shape dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using CodeTensor = BasicTensor<std::int32_t>;

/// Checks that every code of `t` fits the integer range of `dtype`.
inline bool codes_fit(const CodeTensor& t, DType dtype) {
  std::int64_t lo = 0, hi = 0;
  switch (dtype) {
    case DType::i8: lo = -128; hi = 127; break;
    case DType::u8: lo = 0; hi = 255; break;
    case DType::i32: return true;
    case DType::f32: return false;
  }
  return std::all_of(t.data().begin(), t.data().end(),
                     [&](std::int32_t v) { return v >= lo && v <= hi; });
}

}  // namespace chanq
