// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chanq/error.hpp"
#include "chanq/moments.hpp"

namespace chanq {

enum class PdfFamily { laplace, super_cauchy, gaussian };

inline const char* family_name(PdfFamily f) {
  switch (f) {
    case PdfFamily::laplace: return "laplace";
    case PdfFamily::super_cauchy: return "super_cauchy";
    case PdfFamily::gaussian: return "gaussian";
  }
  return "?";
}

inline std::optional<PdfFamily> parse_family(const std::string& s) {
  if (s == "laplace") return PdfFamily::laplace;
  if (s == "super_cauchy") return PdfFamily::super_cauchy;
  if (s == "gaussian") return PdfFamily::gaussian;
  return std::nullopt;
}

namespace detail {

/// Antiderivative of 1/(1+u^4), zero at the origin.
inline double quartic_cauchy_cdf_kernel(double u) {
  const double r2 = std::numbers::sqrt2;
  if (std::isinf(u)) return std::copysign(std::numbers::pi / (2.0 * r2), u);
  const double log_term = std::log((u * u + r2 * u + 1.0) / (u * u - r2 * u + 1.0)) / (4.0 * r2);
  const double atan_term = (std::atan(r2 * u + 1.0) + std::atan(r2 * u - 1.0)) / (2.0 * r2);
  return log_term + atan_term;
}

}  // namespace detail

/// A location-scale density. `scale` is b for Laplace, gamma for super Cauchy and
/// sigma for Gaussian. `truncation` is the super Cauchy half-width in units of gamma.
struct PdfModel {
  static constexpr double kDefaultTruncation = 15.0;

  PdfFamily family = PdfFamily::laplace;
  double location = 0.0;
  double scale = 1.0;
  double truncation = kDefaultTruncation;

  /// Mass of sqrt2/pi / (1+u^4) on (-T, T); the truncated density is divided by it.
  static double super_cauchy_mass(double t) {
    return std::numbers::sqrt2 / std::numbers::pi * 2.0 * detail::quartic_cauchy_cdf_kernel(t);
  }

  double density(double x) const {
    const double u = (x - location) / scale;
    switch (family) {
      case PdfFamily::laplace: return std::exp(-std::abs(u)) / (2.0 * scale);
      case PdfFamily::gaussian: return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * scale);
      case PdfFamily::super_cauchy: {
        if (!(std::abs(u) < truncation)) return 0.0;
        const double u2 = u * u;
        return std::numbers::sqrt2 / (std::numbers::pi * scale * (1.0 + u2 * u2)) / super_cauchy_mass(truncation);
      }
    }
    return 0.0;
  }

  /// Half-width of the region (around `location`) that carries the mass.
  double support_half_width() const {
    return family == PdfFamily::super_cauchy ? truncation * scale : std::numeric_limits<double>::infinity();
  }
};

/// Composite Simpson rule over [a, b] with an even number of panels.
template <typename F>
double simpson(F&& f, double a, double b, std::size_t panels) {
  if (panels < 2) panels = 2;
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double sum = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) sum += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

/// Variance of the truncated super Cauchy density with gamma = 1, by numerical integration.
inline double super_cauchy_unit_variance(double truncation = PdfModel::kDefaultTruncation) {
  const PdfModel m{PdfFamily::super_cauchy, 0.0, 1.0, truncation};
  return 2.0 * simpson([&](double u) { return u * u * m.density(u); }, 0.0, truncation, 1 << 20);
}

/// gamma of the unit-variance truncated super Cauchy density, found by bisection
/// on the numerically integrated variance (relative tolerance 1e-9).
inline double super_cauchy_unit_gamma() {
  static const double value = [] {
    const double v1 = super_cauchy_unit_variance();
    double lo = 0.5, hi = 2.0;
    while ((hi - lo) / lo > 1e-9) {
      const double mid = 0.5 * (lo + hi);
      // The model variance scales as gamma^2 since T is in gamma units.
      if (mid * mid * v1 < 1.0) lo = mid;
      else hi = mid;
    }
    return 0.5 * (lo + hi);
  }();
  return value;
}

/// Moment matching: location = mean, scale chosen so the model variance equals sigma^2.
inline PdfModel fit_pdf(double mean, double sigma, PdfFamily family) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw ContractError("fit_pdf: sigma must be positive");
  switch (family) {
    case PdfFamily::laplace: return {family, mean, sigma / std::numbers::sqrt2};
    case PdfFamily::gaussian: return {family, mean, sigma};
    case PdfFamily::super_cauchy: return {family, mean, sigma * super_cauchy_unit_gamma()};
  }
  throw ContractError("fit_pdf: unknown family");
}

inline PdfModel fit_pdf(const ChannelStats& stats, PdfFamily family) {
  return fit_pdf(stats.mean, stats.stddev(), family);
}

// ---------------------------------------------------------------------------
// Sampling

using Rng = std::mt19937_64;

inline double sample_laplace(Rng& rng, double location, double b) {
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution sign(0.5);
  const double v = e(rng);
  return location + (sign(rng) ? v : -v) * b;
}

/// Rejection sampling from a Cauchy proposal; (1+u^2)/(1+u^4) peaks at (1+sqrt2)/2.
inline double sample_super_cauchy(Rng& rng, double location, double gamma, double truncation = PdfModel::kDefaultTruncation) {
  std::cauchy_distribution<double> proposal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double bound = (1.0 + std::numbers::sqrt2) / 2.0;
  for (;;) {
    const double u = proposal(rng);
    if (!(std::abs(u) < truncation)) continue;
    const double u2 = u * u;
    if (unif(rng) * bound <= (1.0 + u2) / (1.0 + u2 * u2)) return location + gamma * u;
  }
}

inline double sample(Rng& rng, const PdfModel& m) {
  switch (m.family) {
    case PdfFamily::laplace: return sample_laplace(rng, m.location, m.scale);
    case PdfFamily::super_cauchy: return sample_super_cauchy(rng, m.location, m.scale, m.truncation);
    case PdfFamily::gaussian: return std::normal_distribution<double>(m.location, m.scale)(rng);
  }
  return 0.0;
}

inline std::vector<double> sample_n(Rng& rng, const PdfModel& m, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = sample(rng, m);
  return out;
}

}  // namespace chanq
