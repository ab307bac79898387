// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Qn.m fixed-point primitives. A code c in format q represents c * 2^-fl.
// All narrowing saturates and all rounding is round-half-to-even.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "chanq/error.hpp"

namespace chanq {

struct QFormat {
  static constexpr int kMinFl = -31;
  static constexpr int kMaxFl = 31;

  int bits = 8;
  int fl = 0;
  bool is_signed = true;

  std::int64_t min_code() const noexcept { return is_signed ? -(std::int64_t{1} << (bits - 1)) : 0; }
  std::int64_t max_code() const noexcept {
    return is_signed ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1;
  }
  double step() const noexcept { return std::ldexp(1.0, -fl); }
  /// Largest representable real value.
  double max_value() const noexcept { return std::ldexp(static_cast<double>(max_code()), -fl); }
  double min_value() const noexcept { return std::ldexp(static_cast<double>(min_code()), -fl); }

  bool valid() const noexcept { return bits >= 2 && bits <= 62; }

  friend bool operator==(const QFormat&, const QFormat&) = default;
};

inline std::string to_string(const QFormat& q) {
  return std::string(q.is_signed ? "s" : "u") + std::to_string(q.bits) + "/fl" + std::to_string(q.fl);
}

/// Accumulator format used for B-bit operands.
inline QFormat accumulator_format(int operand_bits, int fl) {
  return QFormat{operand_bits <= 8 ? 32 : 2 * operand_bits + 16, fl, true};
}

inline std::int64_t saturate(std::int64_t v, const QFormat& q, bool* saturated = nullptr) noexcept {
  const std::int64_t lo = q.min_code(), hi = q.max_code();
  if (v < lo || v > hi) {
    if (saturated) *saturated = true;
    return v < lo ? lo : hi;
  }
  return v;
}

/// clamp(round_half_even(value * 2^fl)) into q's code range. NaN maps to 0.
inline std::int64_t quantize(double value, const QFormat& q, bool* saturated = nullptr) {
  if (!q.valid()) throw ContractError("quantize: invalid format " + to_string(q));
  if (std::isnan(value)) return 0;
  const double scaled = std::ldexp(value, q.fl);
  constexpr double kLimit = 4611686018427387904.0;  // 2^62
  if (scaled >= kLimit || scaled <= -kLimit) {
    if (saturated) *saturated = true;
    return scaled > 0 ? q.max_code() : q.min_code();
  }
  // nearbyint honours the default FE_TONEAREST mode, i.e. ties to even.
  const auto rounded = static_cast<std::int64_t>(std::nearbyint(scaled));
  return saturate(rounded, q, saturated);
}

inline double dequantize(std::int64_t code, const QFormat& q) {
  if (code < q.min_code() || code > q.max_code()) {
    throw ContractError("dequantize: code " + std::to_string(code) + " outside " + to_string(q));
  }
  return std::ldexp(static_cast<double>(code), -q.fl);
}

/// Largest fl in [-31, 31] such that max_abs <= max_code * 2^-fl. Zero maps to 31.
inline int fl_from_max(double max_abs, int bits, bool is_signed) {
  if (std::isnan(max_abs) || max_abs < 0) throw ContractError("fl_from_max: max_abs must be >= 0");
  const QFormat probe{bits, 0, is_signed};
  const double top = static_cast<double>(probe.max_code());
  for (int fl = QFormat::kMaxFl; fl >= QFormat::kMinFl; --fl) {
    if (max_abs <= std::ldexp(top, -fl)) return fl;
  }
  return QFormat::kMinFl;
}

/// v / 2^s rounded half-to-even, for s >= 0. Exact integer arithmetic.
inline std::int64_t round_shift_right(std::int64_t v, int s) noexcept {
  if (s <= 0) return v;
  if (s >= 64) return 0;  // |v / 2^s| <= 1/2, and the tie goes to the even 0
  const std::int64_t q = v >> s;  // floor division (arithmetic shift)
  const std::uint64_t mask = (std::uint64_t{1} << s) - 1;
  const std::uint64_t rem = static_cast<std::uint64_t>(v) & mask;
  const std::uint64_t half = std::uint64_t{1} << (s - 1);
  if (rem > half || (rem == half && (q & 1))) return q + 1;
  return q;
}

/// Rescales a code by 2^-shift (right shift with half-even rounding for shift >= 0,
/// exact left shift otherwise) and saturates into `out`.
inline std::int64_t rounding_shift(std::int64_t acc, int shift, const QFormat& out, bool* saturated = nullptr) noexcept {
  std::int64_t v = 0;
  if (shift >= 0) {
    v = round_shift_right(acc, shift);
  } else {
    const int left = -shift;
    if (acc != 0 && (left >= 62 || (acc > 0 ? acc > (std::numeric_limits<std::int64_t>::max() >> left)
                                            : acc < (std::numeric_limits<std::int64_t>::min() >> left)))) {
      if (saturated) *saturated = true;
      return acc > 0 ? out.max_code() : out.min_code();
    }
    v = acc * (std::int64_t{1} << left);
  }
  return saturate(v, out, saturated);
}

/// Exact product of two operand codes; its fractional length is the sum of theirs.
struct Product {
  std::int64_t code = 0;
  int fl = 0;
};

inline Product mac_product(std::int64_t a, const QFormat& fa, std::int64_t w, const QFormat& fw) {
  if (a < fa.min_code() || a > fa.max_code() || w < fw.min_code() || w > fw.max_code()) {
    throw ContractError("mac_product: operand outside its format");
  }
  return Product{a * w, fa.fl + fw.fl};
}

/// Saturating accumulator. Each add that leaves the range clamps and bumps the counter.
class Accumulator {
 public:
  explicit Accumulator(QFormat format, std::int64_t initial = 0) : format_(format), value_(saturate(initial, format)) {}

  void add(std::int64_t v) noexcept {
    std::int64_t next = 0;
    if (__builtin_add_overflow(value_, v, &next)) {
      next = v > 0 ? std::numeric_limits<std::int64_t>::max() : std::numeric_limits<std::int64_t>::min();
    }
    bool sat = false;
    value_ = saturate(next, format_, &sat);
    if (sat) ++saturations_;
  }

  std::int64_t value() const noexcept { return value_; }
  std::size_t saturations() const noexcept { return saturations_; }
  const QFormat& format() const noexcept { return format_; }

 private:
  QFormat format_;
  std::int64_t value_;
  std::size_t saturations_ = 0;
};

}  // namespace chanq
