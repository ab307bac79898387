// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>

#include "chanq/error.hpp"

namespace chanq {

/// Per-channel summary statistics.
///
/// Central moments are kept as sums M_k = sum (x - mean)^k, k = 2..6, and merge
/// exactly (up to rounding) with the pairwise update of Pebay (2008). Absolute
/// odd moments sum |x - c|^k around a fixed center c; they merge only when both
/// sides share the same center, which is why the profiler computes them in a
/// second pass around the final channel mean.
struct ChannelStats {
  static constexpr int kMaxOrder = 6;

  std::uint64_t count = 0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  std::array<double, kMaxOrder + 1> central{};  // central[k] = M_k; [0], [1] unused

  double abs_center = 0.0;
  std::uint64_t abs_count = 0;
  std::array<double, 3> abs_sums{};  // sum |x - c|^k for k = 1, 3, 5

  double max_abs() const noexcept { return count ? std::max(std::abs(min), std::abs(max)) : 0.0; }
  double variance() const noexcept { return count ? central[2] / static_cast<double>(count) : 0.0; }
  double stddev() const noexcept { return std::sqrt(variance()); }
  /// E[(x - mean)^k] for k in 2..6.
  double moment(int k) const {
    if (k < 2 || k > kMaxOrder) throw ContractError("moment order out of range");
    return count ? central[static_cast<std::size_t>(k)] / static_cast<double>(count) : 0.0;
  }
  bool has_abs_moments() const noexcept { return abs_count != 0 && abs_count == count; }

  /// Standardized absolute moment E|x - mean|^k / sigma^k, k in 1..6.
  double nu(int k) const {
    const double sigma = stddev();
    if (!(sigma > 0)) throw ContractError("nu: degenerate channel (sigma = 0)");
    if (k % 2 == 0) return moment(k) / std::pow(sigma, k);
    if (!has_abs_moments()) throw ContractError("nu: absolute moments were not accumulated");
    const double s = abs_sums[static_cast<std::size_t>(k / 2)] / static_cast<double>(abs_count);
    return s / std::pow(sigma, k);
  }

  /// Two-pass statistics of a contiguous block. Absolute moments are taken around
  /// `center` when given, otherwise around the block mean.
  template <typename T>
  static ChannelStats from_samples(std::span<const T> xs, std::optional<double> center = std::nullopt) {
    ChannelStats s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (T v : xs) {
      const double x = static_cast<double>(v);
      sum += x;
      s.min = std::min(s.min, x);
      s.max = std::max(s.max, x);
    }
    s.count = xs.size();
    s.mean = sum / static_cast<double>(s.count);
    for (T v : xs) {
      const double d = static_cast<double>(v) - s.mean;
      const double d2 = d * d, d3 = d2 * d;
      s.central[2] += d2;
      s.central[3] += d3;
      s.central[4] += d2 * d2;
      s.central[5] += d2 * d3;
      s.central[6] += d3 * d3;
    }
    s.accumulate_abs(xs, center.value_or(s.mean));
    return s;
  }

  /// Adds sum |x - center|^k (k = 1, 3, 5) for a block of values.
  template <typename T>
  void accumulate_abs(std::span<const T> xs, double center) {
    if (abs_count != 0 && abs_center != center) throw ContractError("accumulate_abs: center changed mid-stream");
    abs_center = center;
    for (T v : xs) {
      const double a = std::abs(static_cast<double>(v) - center);
      const double a2 = a * a;
      abs_sums[0] += a;
      abs_sums[1] += a2 * a;
      abs_sums[2] += a2 * a2 * a;
    }
    abs_count += xs.size();
  }

  /// Pairwise merge. Absolute moments survive only if both sides used the same center.
  void merge(const ChannelStats& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count), nb = static_cast<double>(other.count);
    const double n = na + nb;
    const double delta = other.mean - mean;
    const auto a = central;
    const auto& b = other.central;
    std::array<double, kMaxOrder + 1> merged{};
    for (int p = 2; p <= kMaxOrder; ++p) {
      double m = a[static_cast<std::size_t>(p)] + b[static_cast<std::size_t>(p)];
      for (int k = 1; k <= p - 2; ++k) {
        const double coeff = binomial(p, k) * std::pow(delta, k);
        m += coeff * (std::pow(-nb / n, k) * a[static_cast<std::size_t>(p - k)] +
                      std::pow(na / n, k) * b[static_cast<std::size_t>(p - k)]);
      }
      m += std::pow(na * nb * delta / n, p) * (1.0 / std::pow(nb, p - 1) - std::pow(-1.0 / na, p - 1));
      merged[static_cast<std::size_t>(p)] = m;
    }
    central = merged;
    mean += delta * nb / n;
    count += other.count;
    min = std::min(min, other.min);
    max = std::max(max, other.max);

    if (abs_count != 0 && other.abs_count != 0 && abs_center == other.abs_center) {
      for (std::size_t i = 0; i < abs_sums.size(); ++i) abs_sums[i] += other.abs_sums[i];
      abs_count += other.abs_count;
    } else if (abs_count == 0 && other.abs_count != 0) {
      abs_center = other.abs_center;
      abs_sums = other.abs_sums;
      abs_count = other.abs_count;
    } else if (other.abs_count != 0) {
      abs_count = 0;
      abs_sums = {};
    }
  }

 private:
  static double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }
};

/// Shape- and scale-free feature vector (nu_1, nu_3, nu_4, nu_5, nu_6) used by
/// the best-fit-PDF classifier. Empty for degenerate (sigma = 0) channels.
using MomentFeatures = std::array<double, 5>;

inline std::optional<MomentFeatures> standardized_moments(const ChannelStats& s) {
  if (s.count < 2 || !(s.stddev() > 0) || !s.has_abs_moments()) return std::nullopt;
  return MomentFeatures{s.nu(1), s.nu(3), s.nu(4), s.nu(5), s.nu(6)};
}

}  // namespace chanq
