// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chanq/error.hpp"
#include "chanq/ops.hpp"
#include "chanq/tensor.hpp"

namespace chanq {

enum class LayerKind { conv, depthwise_conv, fc, batchnorm, relu, maxpool, avgpool, add, concat };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::depthwise_conv: return "depthwise_conv";
    case LayerKind::fc: return "fc";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::add: return "add";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

inline std::optional<LayerKind> parse_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::conv, LayerKind::depthwise_conv, LayerKind::fc, LayerKind::batchnorm, LayerKind::relu,
                      LayerKind::maxpool, LayerKind::avgpool, LayerKind::add, LayerKind::concat}) {
    if (s == kind_name(k)) return k;
  }
  return std::nullopt;
}

/// Layers with weights that go through kernel fractional-length coordination.
inline bool is_linear(LayerKind k) {
  return k == LayerKind::conv || k == LayerKind::depthwise_conv || k == LayerKind::fc;
}

enum class Activation { none, relu };

struct LayerAttrs {
  std::optional<Hw> stride;
  std::optional<Hw> pad;
  std::optional<Hw> window;
  std::optional<double> epsilon;
};

struct Node {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::vector<std::string> inputs;
  std::string output;
  LayerAttrs attrs;
  std::map<std::string, Tensor> params;
  /// Filled by validation: relu when every consumer of `output` is a relu node.
  Activation consumer_activation = Activation::none;

  const Tensor& param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw GraphError("node '" + name + "' has no parameter '" + key + "'");
    return it->second;
  }
  bool has_param(const std::string& key) const { return params.count(key) != 0; }

  Hw stride() const { return attrs.stride.value_or(kind == LayerKind::maxpool || kind == LayerKind::avgpool ? window() : Hw{1, 1}); }
  Hw pad() const { return attrs.pad.value_or(Hw{0, 0}); }
  Hw window() const { return attrs.window.value_or(Hw{1, 1}); }
  double epsilon() const { return attrs.epsilon.value_or(1e-5); }
};

/// Network graph. After `validate`, `nodes` are in topological order and
/// `shapes` holds the per-sample dims (no batch axis) of every tensor.
struct Graph {
  std::string input_name = "input";
  Shape input_dims;
  std::string output_name;
  std::vector<Node> nodes;
  std::map<std::string, Shape> shapes;

  const Node* producer(const std::string& tensor) const {
    for (const Node& n : nodes) {
      if (n.output == tensor) return &n;
    }
    return nullptr;
  }

  std::vector<const Node*> consumers(const std::string& tensor) const {
    std::vector<const Node*> out;
    for (const Node& n : nodes) {
      if (std::find(n.inputs.begin(), n.inputs.end(), tensor) != n.inputs.end()) out.push_back(&n);
    }
    return out;
  }

  const Node& node(const std::string& name) const {
    for (const Node& n : nodes) {
      if (n.name == name) return n;
    }
    throw GraphError("no node named '" + name + "'");
  }

  const Shape& shape(const std::string& tensor) const {
    auto it = shapes.find(tensor);
    if (it == shapes.end()) throw GraphError("unknown tensor '" + tensor + "'");
    return it->second;
  }

  /// Channel count of a tensor (axis 0 of the per-sample dims).
  std::size_t channels(const std::string& tensor) const { return shape(tensor).at(0); }

  /// Every activation tensor name: graph input first, then node outputs in order.
  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out{input_name};
    for (const Node& n : nodes) out.push_back(n.output);
    return out;
  }
};

/// Kahn's algorithm; among ready nodes the earliest-listed goes first, so the
/// order is deterministic and preserves an already-valid listing.
inline std::vector<std::size_t> topological_order(const Graph& g) {
  std::map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    if (n.output.empty()) throw GraphError("node '" + n.name + "' has no output");
    if (n.output == g.input_name || !producer.emplace(n.output, i).second) {
      throw GraphError("tensor '" + n.output + "' is produced more than once (node '" + n.name + "')");
    }
  }
  std::vector<std::size_t> pending(g.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> users(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const std::string& in : g.nodes[i].inputs) {
      if (in == g.input_name) continue;
      auto it = producer.find(in);
      if (it == producer.end()) {
        throw GraphError("node '" + g.nodes[i].name + "' reads dangling tensor '" + in + "'");
      }
      ++pending[i];
      users[it->second].push_back(i);
    }
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (pending[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (std::size_t u : users[i]) {
      if (--pending[u] == 0) ready.insert(u);
    }
  }
  if (order.size() != g.nodes.size()) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (pending[i] != 0) throw GraphError("cycle detected through node '" + g.nodes[i].name + "'");
    }
  }
  return order;
}

namespace detail {

inline void check_attrs(const Node& n) {
  const bool conv_like = n.kind == LayerKind::conv || n.kind == LayerKind::depthwise_conv;
  const bool pool_like = n.kind == LayerKind::maxpool || n.kind == LayerKind::avgpool;
  auto reject = [&](const char* attr) {
    throw GraphError("node '" + n.name + "': attribute '" + attr + "' is not meaningful for " + kind_name(n.kind));
  };
  if (n.attrs.stride && !conv_like && !pool_like) reject("stride");
  if (n.attrs.pad && !conv_like && !pool_like) reject("pad");
  if (n.attrs.window && !pool_like) reject("window");
  if (n.attrs.epsilon && n.kind != LayerKind::batchnorm) reject("epsilon");
  if (pool_like && !n.attrs.window) throw GraphError("node '" + n.name + "': pooling needs a window");
}

inline void expect_param(const Node& n, const std::string& key, const Shape& dims) {
  const Tensor& t = n.param(key);
  if (t.dims() != dims) {
    throw ShapeError("node '" + n.name + "': parameter '" + key + "' has dims " + to_string(t.dims()) +
                     ", expected " + to_string(dims));
  }
}

inline void check_param_names(const Node& n, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : n.params) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw GraphError("node '" + n.name + "': unexpected parameter '" + key + "'");
    }
  }
}

inline Shape infer_shape(const Node& n, const std::vector<Shape>& in) {
  auto need_inputs = [&](std::size_t count) {
    if (in.size() != count) {
      throw GraphError("node '" + n.name + "' (" + kind_name(n.kind) + ") needs " + std::to_string(count) +
                       " input(s), has " + std::to_string(in.size()));
    }
  };
  auto need_rank3 = [&](const Shape& s) {
    if (s.size() != 3) throw ShapeError("node '" + n.name + "' needs a [C,H,W] input, got " + to_string(s));
  };
  switch (n.kind) {
    case LayerKind::conv: {
      need_inputs(1);
      need_rank3(in[0]);
      check_param_names(n, {"weight", "bias"});
      const Tensor& w = n.param("weight");
      if (w.rank() != 4 || w.dim(1) != in[0][0]) {
        throw ShapeError("node '" + n.name + "': weight dims " + to_string(w.dims()) + " do not match " +
                         std::to_string(in[0][0]) + " input channels");
      }
      if (n.has_param("bias")) expect_param(n, "bias", {w.dim(0)});
      return {w.dim(0), conv_out_extent(in[0][1], w.dim(2), n.stride().h, n.pad().h),
              conv_out_extent(in[0][2], w.dim(3), n.stride().w, n.pad().w)};
    }
    case LayerKind::depthwise_conv: {
      need_inputs(1);
      need_rank3(in[0]);
      check_param_names(n, {"weight", "bias"});
      const Tensor& w = n.param("weight");
      if (w.rank() != 4 || w.dim(0) != in[0][0] || w.dim(1) != 1) {
        throw ShapeError("node '" + n.name + "': depthwise weight dims " + to_string(w.dims()) + " do not match " +
                         std::to_string(in[0][0]) + " channels");
      }
      if (n.has_param("bias")) expect_param(n, "bias", {w.dim(0)});
      return {w.dim(0), conv_out_extent(in[0][1], w.dim(2), n.stride().h, n.pad().h),
              conv_out_extent(in[0][2], w.dim(3), n.stride().w, n.pad().w)};
    }
    case LayerKind::fc: {
      need_inputs(1);
      check_param_names(n, {"weight", "bias"});
      const Tensor& w = n.param("weight");
      if (w.rank() != 2 || w.dim(1) != element_count(in[0])) {
        throw ShapeError("node '" + n.name + "': weight dims " + to_string(w.dims()) + " do not match " +
                         std::to_string(element_count(in[0])) + " input features");
      }
      if (n.has_param("bias")) expect_param(n, "bias", {w.dim(0)});
      return {w.dim(0)};
    }
    case LayerKind::batchnorm: {
      need_inputs(1);
      check_param_names(n, {"gamma", "beta", "mean", "var"});
      const std::size_t c = in[0].at(0);
      for (const char* key : {"gamma", "beta", "mean", "var"}) expect_param(n, key, {c});
      const Tensor& var = n.param("var");
      for (float v : var.data()) {
        if (!(static_cast<double>(v) + n.epsilon() > 0.0)) {
          throw GraphError("node '" + n.name + "': running variance + epsilon must be positive");
        }
      }
      return in[0];
    }
    case LayerKind::relu:
      need_inputs(1);
      check_param_names(n, {});
      return in[0];
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      need_inputs(1);
      need_rank3(in[0]);
      check_param_names(n, {});
      return {in[0][0], conv_out_extent(in[0][1], n.window().h, n.stride().h, n.pad().h),
              conv_out_extent(in[0][2], n.window().w, n.stride().w, n.pad().w)};
    case LayerKind::add:
      need_inputs(2);
      check_param_names(n, {});
      if (in[0] != in[1]) {
        throw ShapeError("node '" + n.name + "': add operands differ " + to_string(in[0]) + " vs " + to_string(in[1]));
      }
      return in[0];
    case LayerKind::concat: {
      if (in.size() < 2) throw GraphError("node '" + n.name + "': concat needs at least two inputs");
      check_param_names(n, {});
      Shape out = in[0];
      for (std::size_t i = 1; i < in.size(); ++i) {
        if (in[i].size() != out.size() || !std::equal(in[i].begin() + 1, in[i].end(), out.begin() + 1)) {
          throw ShapeError("node '" + n.name + "': concat operands disagree outside the channel axis");
        }
        out[0] += in[i][0];
      }
      return out;
    }
  }
  throw ContractError("unhandled layer kind");
}

}  // namespace detail

/// Sorts nodes topologically, infers every tensor shape, checks parameters and
/// attributes, and annotates consumer activations.
inline Graph validate(Graph g) {
  if (g.input_dims.empty()) throw GraphError("graph input '" + g.input_name + "' has no dims");
  std::set<std::string> names;
  for (const Node& n : g.nodes) {
    if (n.name.empty() || !names.insert(n.name).second) throw GraphError("duplicate or empty node name '" + n.name + "'");
    detail::check_attrs(n);
  }
  const auto order = topological_order(g);
  std::vector<Node> sorted;
  sorted.reserve(order.size());
  for (std::size_t i : order) sorted.push_back(std::move(g.nodes[i]));
  g.nodes = std::move(sorted);

  g.shapes.clear();
  g.shapes[g.input_name] = g.input_dims;
  for (const Node& n : g.nodes) {
    std::vector<Shape> in;
    for (const std::string& t : n.inputs) in.push_back(g.shapes.at(t));
    g.shapes[n.output] = detail::infer_shape(n, in);
  }
  if (g.nodes.empty()) throw GraphError("graph has no nodes");
  if (g.output_name.empty()) g.output_name = g.nodes.back().output;
  if (!g.shapes.count(g.output_name)) throw GraphError("graph output '" + g.output_name + "' is never produced");

  for (Node& n : g.nodes) {
    const auto users = g.consumers(n.output);
    const bool all_relu = !users.empty() && n.output != g.output_name &&
                          std::all_of(users.begin(), users.end(), [](const Node* u) { return u->kind == LayerKind::relu; });
    n.consumer_activation = all_relu ? Activation::relu : Activation::none;
  }
  return g;
}

}  // namespace chanq
