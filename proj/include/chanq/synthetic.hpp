// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Fixed-seed generators for the desk-scale experiments: a small classifier with
// conv, depthwise, residual add, concat, pooling and fc layers whose per-channel
// activation scales are spread over a chosen log2 range, its input data, and a
// labeled corpus of synthetic channels for the best-fit-PDF classifier.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "chanq/distributions.hpp"
#include "chanq/executor.hpp"
#include "chanq/graph.hpp"
#include "chanq/knn.hpp"
#include "chanq/moments.hpp"
#include "chanq/sqnr.hpp"

namespace chanq {

struct SyntheticSpec {
  std::uint64_t seed = 1;
  double scale_span_log2 = 4.0;  // channel scales cover 2^span
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 10;
  std::size_t calibration_samples = 32;

  void check() const {
    if (!(scale_span_log2 >= 0.0) || scale_span_log2 > 16.0) throw UsageError("synthetic: scale span must be in [0, 16]");
    if (height < 4 || width < 4 || height % 2 || width % 2 || height > 256 || width > 256) {
      throw UsageError("synthetic: height and width must be even and in [4, 256]");
    }
    if (classes < 2 || classes > 1000) throw UsageError("synthetic: classes must be in [2, 1000]");
    if (calibration_samples < 2) throw UsageError("synthetic: need at least 2 calibration samples");
  }
};

namespace detail {

inline Tensor random_tensor(Rng& rng, Shape dims, double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  Tensor t(std::move(dims));
  for (float& v : t.data()) v = static_cast<float>(nd(rng));
  return t;
}

/// Per-channel target standard deviations 2^(span * (r / (C - 1) - 1/2)) for a
/// shuffled rank r, so the largest-to-smallest ratio is exactly 2^span.
inline std::vector<double> channel_scales(Rng& rng, std::size_t c, double span) {
  std::vector<std::size_t> rank(c);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> out(c);
  for (std::size_t j = 0; j < c; ++j) {
    const double pos = c > 1 ? static_cast<double>(rank[j]) / static_cast<double>(c - 1) : 0.5;
    out[j] = std::exp2(span * (pos - 0.5));
  }
  return out;
}

inline Node linear_node(Rng& rng, const std::string& name, LayerKind kind, const std::string& in, const std::string& out,
                        Shape wdims, std::size_t fan_in, Hw pad = {0, 0}) {
  Node n;
  n.name = name;
  n.kind = kind;
  n.inputs = {in};
  n.output = out;
  if (kind != LayerKind::fc) n.attrs.pad = pad;
  const std::size_t co = wdims[0];
  n.params.emplace("weight", random_tensor(rng, std::move(wdims), 1.0 / std::sqrt(static_cast<double>(fan_in))));
  n.params.emplace("bias", random_tensor(rng, {co}, 0.1));
  return n;
}

inline Node simple_node(const std::string& name, LayerKind kind, std::vector<std::string> in, const std::string& out) {
  Node n;
  n.name = name;
  n.kind = kind;
  n.inputs = std::move(in);
  n.output = out;
  return n;
}

/// Per-channel mean and standard deviation of a captured tensor.
struct ChannelSummary {
  std::vector<double> mean, sd;
};

inline ChannelSummary summarize_channels(const Tensor& t) {
  ChannelSummary out;
  for (std::size_t ch = 0; ch < t.channels(); ++ch) {
    ChannelStats s;
    for (std::size_t n = 0; n < t.batch(); ++n) s.merge(ChannelStats::from_samples(t.channel_plane(n, ch)));
    out.mean.push_back(s.mean);
    out.sd.push_back(s.stddev());
  }
  return out;
}

}  // namespace detail

/// Input images: per sample and channel, heavy-tailed pixel noise (Student t, 5
/// degrees of freedom) plus a coarse 4x4 random pattern, scaled by a per-channel
/// factor spread over the configured log2 range. The patterns give samples distinct
/// pooled features. `salt` separates datasets.

inline Tensor synthetic_inputs(const SyntheticSpec& spec, std::size_t count, std::uint64_t salt) {
  spec.check();
  if (count == 0) throw UsageError("synthetic: sample count must be positive");
  Rng scale_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 17);
  const auto scales = detail::channel_scales(scale_rng, 3, spec.scale_span_log2);
  Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + 1000003 * (salt + 1));
  std::student_t_distribution<double> t5(5.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double unit = std::sqrt(3.0 / 5.0);  // t5 has variance 5/3
  const std::size_t hw = spec.height * spec.width;
  Tensor x({count, 3, spec.height, spec.width});
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      double pattern[4][4];
      for (auto& row : pattern) {
        for (double& v : row) v = 0.7 * nd(rng);
      }
      for (std::size_t k = 0; k < hw; ++k) {
        const std::size_t py = (k / spec.width) * 4 / spec.height, px = (k % spec.width) * 4 / spec.width;
        x[(n * 3 + c) * hw + k] = static_cast<float>(scales[c] * (unit * t5(rng) + pattern[py][px]));
      }
    }
  }
  return x;
}

/// Builds the synthetic classifier. Every conv-like layer is calibrated on a
/// batch of inputs so output channel j has standard deviation s_j with the s_j
/// spread over 2^span; conv1 gets its scales through a batchnorm node (to be
/// folded before quantization). The last fc bias centers the logits so the
/// teacher's classes are roughly balanced.
inline Graph synthetic_classifier(const SyntheticSpec& spec) {
  spec.check();
  Rng rng(spec.seed);
  Graph g;
  g.input_name = "input";
  g.input_dims = {3, spec.height, spec.width};
  using detail::linear_node;
  using detail::simple_node;
  g.nodes.push_back(linear_node(rng, "conv1", LayerKind::conv, "input", "c1", {8, 3, 3, 3}, 27, {1, 1}));
  {
    Node bn = simple_node("bn1", LayerKind::batchnorm, {"c1"}, "b1");
    for (const char* k : {"gamma", "var"}) bn.params.emplace(k, Tensor({8}, 1.0f));
    for (const char* k : {"beta", "mean"}) bn.params.emplace(k, Tensor({8}, 0.0f));
    bn.attrs.epsilon = 1e-5;
    g.nodes.push_back(std::move(bn));
  }
  g.nodes.push_back(simple_node("relu1", LayerKind::relu, {"b1"}, "r1"));
  g.nodes.push_back(linear_node(rng, "dw1", LayerKind::depthwise_conv, "r1", "d1", {8, 1, 3, 3}, 9, {1, 1}));
  g.nodes.push_back(simple_node("relu2", LayerKind::relu, {"d1"}, "r2"));
  g.nodes.push_back(linear_node(rng, "conv2", LayerKind::conv, "r2", "c2", {8, 8, 1, 1}, 8));
  g.nodes.push_back(simple_node("add1", LayerKind::add, {"r1", "c2"}, "s1"));
  g.nodes.push_back(simple_node("relu3", LayerKind::relu, {"s1"}, "r3"));
  g.nodes.push_back(linear_node(rng, "conv3a", LayerKind::conv, "r3", "c3a", {4, 8, 1, 1}, 8));
  g.nodes.push_back(simple_node("relu4", LayerKind::relu, {"c3a"}, "r3a"));
  g.nodes.push_back(linear_node(rng, "conv3b", LayerKind::conv, "r3", "c3b", {4, 8, 3, 3}, 72, {1, 1}));
  g.nodes.push_back(simple_node("relu5", LayerKind::relu, {"c3b"}, "r3b"));
  g.nodes.push_back(simple_node("cat1", LayerKind::concat, {"r3a", "r3b"}, "cat"));
  {
    Node p = simple_node("pool1", LayerKind::maxpool, {"cat"}, "p1");
    p.attrs.window = Hw{2, 2};
    g.nodes.push_back(std::move(p));
    Node a = simple_node("gap", LayerKind::avgpool, {"p1"}, "p2");
    a.attrs.window = Hw{spec.height / 2, spec.width / 2};
    g.nodes.push_back(std::move(a));
  }
  g.nodes.push_back(linear_node(rng, "fc1", LayerKind::fc, "p2", "f1", {16, 8}, 8));
  g.nodes.push_back(simple_node("relu6", LayerKind::relu, {"f1"}, "r4"));
  g.nodes.push_back(linear_node(rng, "fc2", LayerKind::fc, "r4", "logits", {spec.classes, 16}, 16));
  g.output_name = "logits";
  g = validate(std::move(g));

  const Tensor calib = synthetic_inputs(spec, spec.calibration_samples, 999);
  auto node_ref = [&](const std::string& name) -> Node& {
    for (Node& n : g.nodes) {
      if (n.name == name) return n;
    }
    throw ContractError("synthetic: missing node " + name);
  };
  auto measure = [&](const std::string& tensor) {
    const FloatRun run = execute_float(g, calib, CaptureSet{false, {tensor}});
    return detail::summarize_channels(run.captured.at(tensor));
  };
  auto targets = [&](std::size_t c) { return detail::channel_scales(rng, c, spec.scale_span_log2); };
  auto gain = [](double target, double sd) { return sd > 0 ? target / sd : 1.0; };
  const auto r1_targets = targets(8);

  // conv1 through its batchnorm: normalize, add a small shift, then scale gamma
  // and beta together so each channel reaches its target standard deviation.
  {
    const auto c1 = measure("c1");
    Node& bn = node_ref("bn1");
    std::normal_distribution<double> shift(0.0, 0.3);
    for (std::size_t j = 0; j < 8; ++j) {
      bn.params.at("mean")[j] = static_cast<float>(c1.mean[j]);
      bn.params.at("var")[j] = static_cast<float>(c1.sd[j] * c1.sd[j]);
      bn.params.at("beta")[j] = static_cast<float>(shift(rng));
    }
    const auto b1 = measure("b1");
    for (std::size_t j = 0; j < 8; ++j) {
      const double k = gain(r1_targets[j], b1.sd[j]);
      bn.params.at("gamma")[j] = static_cast<float>(bn.params.at("gamma")[j] * k);
      bn.params.at("beta")[j] = static_cast<float>(bn.params.at("beta")[j] * k);
    }
  }
  // Remaining layers: rescale each output channel's weights and bias.
  auto calibrate = [&](const std::string& name, const std::vector<double>& target) {
    Node& n = node_ref(name);
    const auto out = measure(n.output);
    Tensor& w = n.params.at("weight");
    Tensor& b = n.params.at("bias");
    const std::size_t co = w.dim(0), per = w.size() / co;
    for (std::size_t j = 0; j < co; ++j) {
      const double k = gain(target[j], out.sd[j]);
      for (std::size_t i = 0; i < per; ++i) w[j * per + i] = static_cast<float>(w[j * per + i] * k);
      b[j] = static_cast<float>(b[j] * k);
    }
  };
  calibrate("dw1", targets(8));
  calibrate("conv2", r1_targets);
  calibrate("conv3a", targets(4));
  calibrate("conv3b", targets(4));
  // FC layers: unit standard deviation, centered on zero.
  auto center = [&](const std::string& name) {
    Node& n = node_ref(name);
    const auto out = measure(n.output);
    Tensor& b = n.params.at("bias");
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = static_cast<float>(b[j] - out.mean[j]);
  };
  calibrate("fc1", std::vector<double>(16, 1.0));
  center("fc1");
  calibrate("fc2", std::vector<double>(spec.classes, 1.0));
  center("fc2");
  return g;
}

/// Teacher labels: argmax of the float network's output (first maximum wins).
inline std::vector<std::int32_t> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.batch(), k = logits.size() / n;
  std::vector<std::int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.data().subspan(i * k, k);
    out[i] = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel corpus for the best-fit-PDF classifier

struct CorpusSpec {
  std::uint64_t seed = 1;
  std::size_t channels = 2000;
  std::size_t samples_per_channel = 4096;
  double log2_sigma_min = -4.0;
  double log2_sigma_max = 4.0;
  int bits = 8;
};

struct CorpusEntry {
  PdfFamily drawn_from = PdfFamily::laplace;
  double sigma = 1.0;
  LabeledFeatures labeled;
};

/// Channels alternate between Laplace and truncated super Cauchy sources with
/// log-uniform sigma; each is labeled by `label_channel` on its own samples.
inline std::vector<CorpusEntry> synthetic_channel_corpus(const CorpusSpec& spec) {
  if (spec.samples_per_channel < 100) throw UsageError("corpus: need at least 100 samples per channel");
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> log_sigma(spec.log2_sigma_min, spec.log2_sigma_max);
  std::uniform_real_distribution<double> offset(-0.25, 0.25);
  std::vector<CorpusEntry> out;
  out.reserve(spec.channels);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    CorpusEntry e;
    e.drawn_from = c % 2 ? PdfFamily::super_cauchy : PdfFamily::laplace;
    e.sigma = std::exp2(log_sigma(rng));
    const PdfModel pdf = fit_pdf(offset(rng) * e.sigma, e.sigma, e.drawn_from);
    const auto xs = sample_n(rng, pdf, spec.samples_per_channel);
    const ChannelStats s = ChannelStats::from_samples(std::span<const double>(xs));
    const auto f = standardized_moments(s);
    if (!f) continue;
    e.labeled.features = *f;
    e.labeled.label = label_channel(std::span<const double>(xs), spec.bits);
    out.push_back(e);
  }
  return out;
}

}  // namespace chanq
