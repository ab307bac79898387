// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include "chanq/graph.hpp"

namespace chanq {

/// Absorbs every batchnorm into the conv/depthwise/fc layer that feeds it:
///   w' = w * gamma / sqrt(var + eps)            (per output channel)
///   b' = (b - mean) * gamma / sqrt(var + eps) + beta
/// The linear layer takes over the batchnorm's output tensor name.
inline Graph fold_batchnorm(Graph g) {
  for (std::size_t bi = 0; bi < g.nodes.size();) {
    if (g.nodes[bi].kind != LayerKind::batchnorm) {
      ++bi;
      continue;
    }
    const Node bn = g.nodes[bi];
    Node* lin = nullptr;
    for (Node& n : g.nodes) {
      if (n.output == bn.inputs.at(0)) lin = &n;
    }
    if (!lin || !is_linear(lin->kind)) {
      throw GraphError("batchnorm '" + bn.name + "' is not preceded by a conv/depthwise/fc layer");
    }
    if (g.consumers(lin->output).size() != 1 || lin->output == g.output_name) {
      throw GraphError("batchnorm '" + bn.name + "': output of '" + lin->name + "' has other consumers, cannot fold");
    }
    Tensor& w = lin->params.at("weight");
    const std::size_t co = w.dim(0);
    const std::size_t per_channel = w.size() / co;
    if (!lin->has_param("bias")) lin->params.emplace("bias", Tensor({co}, 0.0f));
    Tensor& b = lin->params.at("bias");
    const Tensor& gamma = bn.param("gamma");
    const Tensor& beta = bn.param("beta");
    const Tensor& mean = bn.param("mean");
    const Tensor& var = bn.param("var");
    for (std::size_t j = 0; j < co; ++j) {
      const double scale = static_cast<double>(gamma[j]) / std::sqrt(static_cast<double>(var[j]) + bn.epsilon());
      for (std::size_t k = 0; k < per_channel; ++k) {
        w[j * per_channel + k] = static_cast<float>(w[j * per_channel + k] * scale);
      }
      b[j] = static_cast<float>((static_cast<double>(b[j]) - mean[j]) * scale + beta[j]);
    }
    lin->output = bn.output;
    g.nodes.erase(g.nodes.begin() + static_cast<std::ptrdiff_t>(bi));
  }
  return validate(std::move(g));
}

}  // namespace chanq
