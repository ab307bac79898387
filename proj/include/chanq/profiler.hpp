// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "chanq/executor.hpp"
#include "chanq/graph.hpp"
#include "chanq/moments.hpp"

namespace chanq {

struct TensorStats {
  std::vector<ChannelStats> channels;
  ChannelStats pooled;  // all channels together
};

struct ProfileStats {
  std::size_t samples = 0;
  std::map<std::string, TensorStats> activations;
  std::map<std::string, TensorStats> parameters;  // "<node>.weight", per output channel

  const TensorStats& activation(const std::string& name) const {
    auto it = activations.find(name);
    if (it == activations.end()) throw GraphError("no statistics for tensor '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline void accumulate_pass1(TensorStats& ts, const Tensor& t) {
  const std::size_t c = t.channels();
  if (ts.channels.empty()) ts.channels.resize(c);
  for (std::size_t n = 0; n < t.batch(); ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const ChannelStats block = ChannelStats::from_samples(t.channel_plane(n, ch));
      ts.channels[ch].merge(block);
      ts.pooled.merge(block);
    }
  }
}

inline void reset_abs(ChannelStats& s) {
  s.abs_count = 0;
  s.abs_sums = {};
  s.abs_center = s.mean;
}

inline void accumulate_pass2(TensorStats& ts, const Tensor& t) {
  for (std::size_t n = 0; n < t.batch(); ++n) {
    for (std::size_t ch = 0; ch < t.channels(); ++ch) {
      const auto plane = t.channel_plane(n, ch);
      ts.channels[ch].accumulate_abs(plane, ts.channels[ch].abs_center);
      ts.pooled.accumulate_abs(plane, ts.pooled.abs_center);
    }
  }
}

}  // namespace detail

/// Per-channel statistics of every activation tensor over the selected samples of
/// `dataset` ([N, ...] matching the graph input), plus exact per-output-channel
/// statistics of every weight tensor. Two forward passes: moments and extrema
/// first, then absolute moments around the final means. Accumulation order is
/// fixed (sample order, then channel order), so results are deterministic.
inline ProfileStats collect_stats(const Graph& g, const Tensor& dataset, std::span<const std::size_t> indices = {},
                                  std::size_t batch_size = 16) {
  std::vector<std::size_t> order(indices.begin(), indices.end());
  if (order.empty()) {
    order.resize(dataset.batch());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  if (order.empty()) throw Error("collect_stats: profiling dataset is empty");
  batch_size = std::max<std::size_t>(batch_size, 1);

  ProfileStats ps;
  ps.samples = order.size();
  auto for_each_batch = [&](auto&& fn) {
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - b);
      const Tensor batch = dataset.gather_batch(std::span<const std::size_t>(order).subspan(b, count));
      const FloatRun run = execute_float(g, batch, CaptureSet::everything());
      for (const auto& [name, t] : run.captured) fn(ps.activations[name], t);
    }
  };
  for_each_batch([](TensorStats& ts, const Tensor& t) { detail::accumulate_pass1(ts, t); });
  for (auto& [_, ts] : ps.activations) {
    for (auto& s : ts.channels) detail::reset_abs(s);
    detail::reset_abs(ts.pooled);
  }
  for_each_batch([](TensorStats& ts, const Tensor& t) { detail::accumulate_pass2(ts, t); });

  for (const Node& n : g.nodes) {
    if (!is_linear(n.kind)) continue;
    const Tensor& w = n.param("weight");
    const std::size_t co = w.dim(0), per = w.size() / co;
    TensorStats ts;
    for (std::size_t j = 0; j < co; ++j) {
      const auto slice = w.data().subspan(j * per, per);
      ts.channels.push_back(ChannelStats::from_samples(slice));
    }
    ts.pooled = ChannelStats::from_samples(w.data());
    ps.parameters.emplace(n.name + ".weight", std::move(ts));
  }
  return ps;
}

// ---------------------------------------------------------------------------
// JSON report

inline nlohmann::json to_json(const ChannelStats& s) {
  nlohmann::json j;
  j["count"] = s.count;
  j["min"] = s.min;
  j["max"] = s.max;
  j["max_abs"] = s.max_abs();
  j["mean"] = s.mean;
  j["central_sums"] = std::vector<double>(s.central.begin() + 2, s.central.end());
  j["abs_center"] = s.abs_center;
  j["abs_count"] = s.abs_count;
  j["abs_sums"] = s.abs_sums;
  if (s.stddev() > 0 && s.has_abs_moments()) {
    std::vector<double> nu;
    for (int k = 1; k <= ChannelStats::kMaxOrder; ++k) nu.push_back(s.nu(k));
    j["nu"] = nu;
  } else {
    j["nu"] = nullptr;
  }
  return j;
}

inline ChannelStats channel_stats_from_json(const nlohmann::json& j) {
  ChannelStats s;
  s.count = j.at("count").get<std::uint64_t>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
  const auto sums = j.at("central_sums").get<std::vector<double>>();
  if (sums.size() != ChannelStats::kMaxOrder - 1) throw FormatError("stats: central_sums must have 5 entries");
  std::copy(sums.begin(), sums.end(), s.central.begin() + 2);
  s.abs_center = j.at("abs_center").get<double>();
  s.abs_count = j.at("abs_count").get<std::uint64_t>();
  s.abs_sums = j.at("abs_sums").get<std::array<double, 3>>();
  return s;
}

inline nlohmann::json to_json(const TensorStats& ts) {
  nlohmann::json j;
  j["pooled"] = to_json(ts.pooled);
  j["channels"] = nlohmann::json::array();
  for (const auto& s : ts.channels) j["channels"].push_back(to_json(s));
  return j;
}

inline nlohmann::json to_json(const ProfileStats& ps) {
  nlohmann::json j;
  j["version"] = 1;
  j["samples"] = ps.samples;
  j["activations"] = nlohmann::json::object();
  for (const auto& [name, ts] : ps.activations) j["activations"][name] = to_json(ts);
  j["parameters"] = nlohmann::json::object();
  for (const auto& [name, ts] : ps.parameters) j["parameters"][name] = to_json(ts);
  return j;
}

inline ProfileStats profile_stats_from_json(const nlohmann::json& j) {
  try {
    if (j.value("version", 0) != 1) throw FormatError("stats: unsupported version");
    ProfileStats ps;
    ps.samples = j.at("samples").get<std::size_t>();
    auto load_group = [](const nlohmann::json& group, std::map<std::string, TensorStats>& out) {
      for (const auto& [name, jt] : group.items()) {
        TensorStats ts;
        ts.pooled = channel_stats_from_json(jt.at("pooled"));
        for (const auto& jc : jt.at("channels")) ts.channels.push_back(channel_stats_from_json(jc));
        out.emplace(name, std::move(ts));
      }
    };
    load_group(j.at("activations"), ps.activations);
    load_group(j.at("parameters"), ps.parameters);
    return ps;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("stats: ") + e.what());
  }
}

}  // namespace chanq
