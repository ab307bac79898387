// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "json.hpp"

#include "chanq/distributions.hpp"
#include "chanq/moments.hpp"

namespace chanq {

struct LabeledFeatures {
  MomentFeatures features{};
  PdfFamily label = PdfFamily::laplace;
};

/// k-nearest-neighbour best-fit-PDF classifier over z-scored moment features.
struct KnnModel {
  static constexpr std::size_t kDefaultK = 12;

  std::size_t k = kDefaultK;
  MomentFeatures mean{};
  MomentFeatures scale{};  // per-feature standard deviation (1 when constant)
  std::vector<LabeledFeatures> points;  // stored normalized

  MomentFeatures normalize(const MomentFeatures& f) const {
    MomentFeatures z{};
    for (std::size_t d = 0; d < f.size(); ++d) z[d] = (f[d] - mean[d]) / scale[d];
    return z;
  }
};

inline KnnModel train_knn(const std::vector<LabeledFeatures>& data, std::size_t k = KnnModel::kDefaultK) {
  if (k == 0) throw ContractError("train_knn: k must be positive");
  if (data.size() < k) {
    throw Error("train_knn: training set has " + std::to_string(data.size()) + " entries, need at least k = " +
                std::to_string(k));
  }
  KnnModel m;
  m.k = k;
  const double n = static_cast<double>(data.size());
  for (const auto& p : data) {
    for (std::size_t d = 0; d < p.features.size(); ++d) m.mean[d] += p.features[d] / n;
  }
  for (std::size_t d = 0; d < m.scale.size(); ++d) {
    double ss = 0.0;
    for (const auto& p : data) ss += (p.features[d] - m.mean[d]) * (p.features[d] - m.mean[d]);
    const double sd = std::sqrt(ss / n);
    m.scale[d] = sd > 0 ? sd : 1.0;
  }
  m.points.reserve(data.size());
  for (const auto& p : data) m.points.push_back({m.normalize(p.features), p.label});
  return m;
}

/// Majority vote among the k nearest training points (Euclidean distance after
/// normalization; equal distances are ordered by training index). Ties go to laplace.
inline PdfFamily classify_pdf(const MomentFeatures& features, const KnnModel& model) {
  if (model.points.size() < model.k) throw ContractError("classify_pdf: model has fewer points than k");
  const MomentFeatures z = model.normalize(features);
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(model.points.size());
  for (std::size_t i = 0; i < model.points.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) {
      const double diff = z[d] - model.points[i].features[d];
      d2 += diff * diff;
    }
    dist.emplace_back(d2, i);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(model.k), dist.end());
  std::size_t laplace = 0, cauchy = 0;
  for (std::size_t i = 0; i < model.k; ++i) {
    if (model.points[dist[i].second].label == PdfFamily::super_cauchy) ++cauchy;
    else ++laplace;
  }
  return cauchy > laplace ? PdfFamily::super_cauchy : PdfFamily::laplace;
}

inline nlohmann::json to_json(const KnnModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["k"] = m.k;
  j["mean"] = m.mean;
  j["scale"] = m.scale;
  j["points"] = nlohmann::json::array();
  for (const auto& p : m.points) j["points"].push_back({{"z", p.features}, {"label", family_name(p.label)}});
  return j;
}

inline KnnModel knn_from_json(const nlohmann::json& j) {
  try {
    if (j.value("version", 0) != 1) throw FormatError("knn: unsupported version");
    KnnModel m;
    m.k = j.at("k").get<std::size_t>();
    m.mean = j.at("mean").get<MomentFeatures>();
    m.scale = j.at("scale").get<MomentFeatures>();
    for (const auto& jp : j.at("points")) {
      const auto label = parse_family(jp.at("label").get<std::string>());
      if (!label || *label == PdfFamily::gaussian) throw FormatError("knn: bad label in model");
      m.points.push_back({jp.at("z").get<MomentFeatures>(), *label});
    }
    if (m.k == 0 || m.points.size() < m.k) throw FormatError("knn: model has fewer points than k");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("knn: ") + e.what());
  }
}

}  // namespace chanq
