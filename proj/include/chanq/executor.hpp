// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <set>
#include <string>

#include "chanq/graph.hpp"
#include "chanq/ops.hpp"

namespace chanq {

/// Which tensors an execution should hand back.
struct CaptureSet {
  bool all = false;
  std::set<std::string> names;

  static CaptureSet everything() { return CaptureSet{true, {}}; }
  static CaptureSet none() { return CaptureSet{}; }
  bool contains(const std::string& name) const { return all || names.count(name) != 0; }
};

struct FloatRun {
  Tensor output;
  std::map<std::string, Tensor> captured;
};

inline Tensor run_float_node(const Node& n, const std::vector<const Tensor*>& in) {
  auto bias_or_zero = [&](std::size_t count) {
    return n.has_param("bias") ? n.param("bias") : Tensor({count}, 0.0f);
  };
  switch (n.kind) {
    case LayerKind::conv: {
      const Tensor& w = n.param("weight");
      return conv2d(*in[0], w, bias_or_zero(w.dim(0)), n.stride(), n.pad());
    }
    case LayerKind::depthwise_conv: {
      const Tensor& w = n.param("weight");
      return depthwise_conv2d(*in[0], w, bias_or_zero(w.dim(0)), n.stride(), n.pad());
    }
    case LayerKind::fc: {
      const Tensor& w = n.param("weight");
      return fully_connected(*in[0], w, bias_or_zero(w.dim(0)));
    }
    case LayerKind::batchnorm: {
      Tensor out = *in[0];
      const std::size_t c = out.channels(), p = out.plane();
      const Tensor &gamma = n.param("gamma"), &beta = n.param("beta"), &mean = n.param("mean"), &var = n.param("var");
      for (std::size_t b = 0; b < out.batch(); ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double scale = gamma[ch] / std::sqrt(static_cast<double>(var[ch]) + n.epsilon());
          float* v = out.data().data() + (b * c + ch) * p;
          for (std::size_t i = 0; i < p; ++i) v[i] = static_cast<float>((v[i] - mean[ch]) * scale + beta[ch]);
        }
      }
      return out;
    }
    case LayerKind::relu: return relu(*in[0]);
    case LayerKind::maxpool: return pool(*in[0], PoolKind::max, n.window(), n.stride(), n.pad());
    case LayerKind::avgpool: return pool(*in[0], PoolKind::avg, n.window(), n.stride(), n.pad());
    case LayerKind::add: return add_elementwise(*in[0], *in[1]);
    case LayerKind::concat: {
      Tensor out = concat_channels(*in[0], *in[1]);
      for (std::size_t i = 2; i < in.size(); ++i) out = concat_channels(out, *in[i]);
      return out;
    }
  }
  throw ContractError("unhandled layer kind");
}

/// Float32 forward pass over a batch. Captured tensors hold node outputs as
/// produced, so a conv feeding a relu is captured before the nonlinearity.
inline FloatRun execute_float(const Graph& g, const Tensor& input, const CaptureSet& capture = {}) {
  Shape expected{input.batch()};
  expected.insert(expected.end(), g.input_dims.begin(), g.input_dims.end());
  if (input.dims() != expected) {
    throw ShapeError("input dims " + to_string(input.dims()) + " do not match graph input " + to_string(g.input_dims));
  }
  // Reference counts let intermediate tensors be dropped once consumed.
  std::map<std::string, std::size_t> remaining;
  for (const Node& n : g.nodes) {
    for (const auto& t : n.inputs) ++remaining[t];
  }
  std::map<std::string, Tensor> live;
  live.emplace(g.input_name, input);
  FloatRun run;
  if (capture.contains(g.input_name)) run.captured.emplace(g.input_name, input);
  for (const Node& n : g.nodes) {
    std::vector<const Tensor*> in;
    for (const auto& t : n.inputs) in.push_back(&live.at(t));
    Tensor out;
    try {
      out = run_float_node(n, in);
    } catch (const ShapeError& e) {
      throw ShapeError("node '" + n.name + "': " + e.what());
    }
    for (const auto& t : n.inputs) {
      if (--remaining[t] == 0 && t != g.output_name) live.erase(t);
    }
    if (capture.contains(n.output)) run.captured.emplace(n.output, out);
    live.insert_or_assign(n.output, std::move(out));
  }
  run.output = std::move(live.at(g.output_name));
  return run;
}

}  // namespace chanq
