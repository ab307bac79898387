// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Expected quantization noise of a density under a fixed-point format, and the
// fractional length that minimizes it.
//
// The error of a value x is e(x) = ref(x) - deq(quant(x)), where ref(x) = x for
// signed formats and max(x, 0) for unsigned ones (an unsigned format holds a
// post-relu value, so negative inputs cost nothing). Saturated values keep the
// clipped error, which is the overload term.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "chanq/distributions.hpp"
#include "chanq/fixed_point.hpp"
#include "chanq/moments.hpp"

namespace chanq {

inline constexpr std::size_t kNoisePanels = std::size_t{1} << 18;

inline double reference_value(double x, const QFormat& q) { return q.is_signed ? x : std::max(x, 0.0); }

inline double quantization_error(double x, const QFormat& q) {
  return reference_value(x, q) - static_cast<double>(quantize(x, q)) * q.step();
}

/// Integral of e(x)^2 * density(x) over [a, b] by composite Simpson, split at every
/// quantization threshold inside the interval (and at any extra `breaks`) so each
/// piece has a smooth integrand. About `panels` panels in total, at least two per piece.
template <typename F>
double integrate_noise(F&& density, double a, double b, const QFormat& q, std::size_t panels = kNoisePanels,
                       std::span<const double> breaks = {}) {
  if (!(b > a)) throw ContractError("integrate_noise: empty interval");
  const double step = q.step();
  std::vector<double> cuts{a, b};
  for (double x : breaks) {
    if (x > a && x < b) cuts.push_back(x);
  }
  // Thresholds (k + 1/2) * step between adjacent codes k and k + 1.
  const double k_lo = std::max(std::ceil(a / step - 0.5), static_cast<double>(q.min_code()));
  const double k_hi = std::min(std::floor(b / step - 0.5), static_cast<double>(q.max_code() - 1));
  if (k_hi - k_lo > 1e7) throw ContractError("integrate_noise: too many quantization cells in range");
  for (double k = k_lo; k <= k_hi; k += 1.0) {
    const double t = (k + 0.5) * step;
    if (t > a && t < b) cuts.push_back(t);
  }
  if (!q.is_signed && 0.0 > a && 0.0 < b) cuts.push_back(0.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const double width = b - a;
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double l = cuts[p], r = cuts[p + 1];
    const auto n = static_cast<std::size_t>(std::ceil((r - l) / width * static_cast<double>(panels)));
    // The code is constant on the open piece, so evaluate it once at the midpoint.
    const double level = static_cast<double>(quantize(0.5 * (l + r), q)) * step;
    total += simpson(
        [&](double x) {
          const double e = reference_value(x, q) - level;
          return e * e * density(x);
        },
        l, r, std::max<std::size_t>(n, 2));
  }
  return total;
}

/// Noise evaluator for one density. Nodes sit on a power-of-two grid anchored at
/// zero, so for every format whose threshold spacing is a multiple of four grid
/// steps the thresholds fall on Simpson panel boundaries and the cached density
/// values can be reused across formats. Finer formats fall back to
/// `integrate_noise`. The integration window is location +- max(T, 30) * scale.
class NoiseIntegrator {
 public:
  explicit NoiseIntegrator(const PdfModel& pdf, std::size_t panels = kNoisePanels) : pdf_(pdf), panels_(panels) {
    if (!(pdf.scale > 0) || !std::isfinite(pdf.scale) || !std::isfinite(pdf.location)) {
      throw ContractError("NoiseIntegrator: pdf scale must be positive and finite");
    }
    const double reach = pdf.family == PdfFamily::super_cauchy ? std::max(pdf.truncation, 30.0) : 30.0;
    half_width_ = reach * pdf.scale;
    lo_ = pdf.location - half_width_;
    hi_ = pdf.location + half_width_;
    h_ = std::ldexp(1.0, static_cast<int>(std::floor(std::log2((hi_ - lo_) / static_cast<double>(panels)))));
    first_ = static_cast<std::int64_t>(std::floor(lo_ / h_));
    if (first_ % 2) --first_;
    std::int64_t last = static_cast<std::int64_t>(std::ceil(hi_ / h_));
    if (last % 2) ++last;
    const auto count = static_cast<std::size_t>(last - first_ + 1);
    weighted_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double w = (i == 0 || i + 1 == count) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      weighted_[i] = w * h_ / 3.0 * pdf.density(node(i));
    }
  }

  const PdfModel& pdf() const noexcept { return pdf_; }
  double grid_step() const noexcept { return h_; }
  double lower() const noexcept { return lo_; }
  double upper() const noexcept { return hi_; }

  /// Expected squared error E[e(x)^2] under the density.
  double noise(const QFormat& q) const {
    if (!q.valid()) throw ContractError("noise: invalid format " + to_string(q));
    const double step = q.step();
    if (step >= 4.0 * h_) return cached_noise(q, step);
    std::vector<double> breaks{pdf_.location};
    if (pdf_.family == PdfFamily::super_cauchy) {
      breaks.push_back(pdf_.location - pdf_.truncation * pdf_.scale);
      breaks.push_back(pdf_.location + pdf_.truncation * pdf_.scale);
    }
    return integrate_noise([this](double x) { return pdf_.density(x); }, node(0), node(weighted_.size() - 1), q,
                           panels_, breaks);
  }

 private:
  double node(std::size_t i) const noexcept { return static_cast<double>(first_ + static_cast<std::int64_t>(i)) * h_; }

  double cached_noise(const QFormat& q, double step) const {
    const std::int64_t max_code = q.max_code();
    std::int64_t code = quantize(node(0), q);
    auto threshold = [&](std::int64_t c) {
      return c < max_code ? (static_cast<double>(c) + 0.5) * step : std::numeric_limits<double>::infinity();
    };
    double next = threshold(code);
    double sum = 0.0;
    for (std::size_t i = 0; i < weighted_.size(); ++i) {
      const double x = node(i);
      while (x > next) next = threshold(++code);
      if (weighted_[i] == 0.0) continue;
      const double e = reference_value(x, q) - static_cast<double>(code) * step;
      sum += weighted_[i] * e * e;
    }
    return sum;
  }

  PdfModel pdf_;
  std::size_t panels_;
  double half_width_ = 0.0, lo_ = 0.0, hi_ = 0.0, h_ = 0.0;
  std::int64_t first_ = 0;
  std::vector<double> weighted_;
};

inline double sqnr_noise(const PdfModel& pdf, const QFormat& q, std::size_t panels = kNoisePanels) {
  return NoiseIntegrator(pdf, panels).noise(q);
}

/// Second moment of the reference signal, E[ref(x)^2], on the same grid.
inline double signal_power(const PdfModel& pdf, bool is_signed) {
  const double reach = 30.0 * pdf.scale;
  return simpson(
      [&](double x) {
        const double r = is_signed ? x : std::max(x, 0.0);
        return r * r * pdf.density(x);
      },
      pdf.location - reach, pdf.location + reach, kNoisePanels);
}

/// argmin over fl of the expected noise. The scan starts at the coarsest fl whose
/// range covers the whole integration window (a coarser grid nested in it can
/// only do worse) and walks toward finer fls until two consecutive steps fail to
/// improve: granular noise falls and overload noise rises with fl, so the curve
/// has a single valley. Ties go to the smaller fl.
inline int optimal_fl(const PdfModel& pdf, int bits, bool is_signed) {
  const NoiseIntegrator integ(pdf);
  const double reach = is_signed ? std::max(std::abs(integ.lower()), std::abs(integ.upper())) : std::max(integ.upper(), 0.0);
  const int start = std::max(fl_from_max(reach, bits, is_signed), QFormat::kMinFl);
  int best_fl = start;
  double best = std::numeric_limits<double>::infinity();
  int worse = 0;
  for (int fl = start; fl <= QFormat::kMaxFl && worse < 2; ++fl) {
    const double n = integ.noise(QFormat{bits, fl, is_signed});
    if (n < best) {
      best = n;
      best_fl = fl;
      worse = 0;
    } else {
      ++worse;
    }
  }
  return best_fl;
}

/// Fits `family` to the channel moments and returns its noise-optimal fl. A
/// channel without spread falls back to its max value (an all-zero channel gets 31).
inline int optimal_fl(const ChannelStats& stats, PdfFamily family, int bits, bool is_signed) {
  if (!(stats.stddev() > 0)) return fl_from_max(stats.max_abs(), bits, is_signed);
  return optimal_fl(fit_pdf(stats, family), bits, is_signed);
}

template <typename T>
double empirical_mse(std::span<const T> samples, const QFormat& q) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (T v : samples) {
    const double e = quantization_error(static_cast<double>(v), q);
    sum += e * e;
  }
  return sum / static_cast<double>(samples.size());
}

/// Best-fit family of a sample set: the candidate whose optimal fl gives the lower
/// measured quantization error on the samples themselves. Ties go to laplace.
template <typename T>
PdfFamily label_channel(std::span<const T> samples, int bits, bool is_signed = true) {
  if (samples.size() < 100) throw ContractError("label_channel: needs at least 100 samples");
  const ChannelStats s = ChannelStats::from_samples(samples);
  if (!(s.stddev() > 0)) throw ContractError("label_channel: degenerate samples (sigma = 0)");
  const int fl_l = optimal_fl(s, PdfFamily::laplace, bits, is_signed);
  const int fl_c = optimal_fl(s, PdfFamily::super_cauchy, bits, is_signed);
  if (fl_l == fl_c) return PdfFamily::laplace;
  const double mse_l = empirical_mse(samples, QFormat{bits, fl_l, is_signed});
  const double mse_c = empirical_mse(samples, QFormat{bits, fl_c, is_signed});
  return mse_c < mse_l ? PdfFamily::super_cauchy : PdfFamily::laplace;
}

/// SQNR in dB of a density under a format (signal power over expected noise).
inline double sqnr_db(const PdfModel& pdf, const QFormat& q) {
  return 10.0 * std::log10(signal_power(pdf, q.is_signed) / sqnr_noise(pdf, q));
}

}  // namespace chanq
