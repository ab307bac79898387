// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Fractional-length solver. Produces a QuantPlan: one format per activation
// tensor channel and, per layer, the coordinated kernel/bias fls and shifts.
//
// Format rules:
//  * Stats-derived tensors (graph input, conv/depthwise/fc/add outputs) get their
//    fls from the profiling stats according to the mode. FC outputs always get a
//    single fl computed from the pooled stats of the tensor.
//  * relu, maxpool and avgpool outputs inherit the input fls. concat concatenates
//    its inputs' fls; in layerwise_max mode the inputs are first shifted to the
//    smallest fl, and when signedness differs unsigned channels are re-coded as
//    signed at fl - 1.
//  * A tensor is unsigned when produced by relu, when every consumer is a relu,
//    or when it is a pool/concat/add of unsigned tensors.
//  * Weights always use max-based fls.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "chanq/coordinate.hpp"
#include "chanq/fixed_point.hpp"
#include "chanq/graph.hpp"
#include "chanq/knn.hpp"
#include "chanq/profiler.hpp"
#include "chanq/sqnr.hpp"

namespace chanq {

enum class PlanMode { layerwise_max, cw_max, cw_laplace, cw_scauchy, cw_pdf_aware };

inline const char* mode_name(PlanMode m) {
  switch (m) {
    case PlanMode::layerwise_max: return "layerwise_max";
    case PlanMode::cw_max: return "cw_max";
    case PlanMode::cw_laplace: return "cw_laplace";
    case PlanMode::cw_scauchy: return "cw_scauchy";
    case PlanMode::cw_pdf_aware: return "cw_pdf_aware";
  }
  return "?";
}

inline std::optional<PlanMode> parse_mode(const std::string& s) {
  for (PlanMode m : {PlanMode::layerwise_max, PlanMode::cw_max, PlanMode::cw_laplace, PlanMode::cw_scauchy,
                     PlanMode::cw_pdf_aware}) {
    if (s == mode_name(m)) return m;
  }
  return std::nullopt;
}

inline constexpr PlanMode kAllModes[] = {PlanMode::layerwise_max, PlanMode::cw_max, PlanMode::cw_laplace,
                                         PlanMode::cw_scauchy, PlanMode::cw_pdf_aware};

struct TensorFormat {
  int bits = 8;
  bool is_signed = true;
  bool from_stats = true;          // false when inherited from an input tensor
  std::vector<int> fl;             // one per channel
  std::vector<std::string> family; // per channel, cw_pdf_aware only

  QFormat format(std::size_t c) const { return QFormat{bits, fl.at(c), is_signed}; }
  bool single_fl() const {
    return std::all_of(fl.begin(), fl.end(), [&](int f) { return f == fl.front(); });
  }
};

struct LayerFormat {
  LayerKind kind = LayerKind::conv;
  int ker_floor = 0;       // layer-wise kernel fl (linear layers)
  IntMatrix ker;           // adjusted kernel fl per (j, i)
  IntMatrix comp;          // partial-sum right shift per (j, i)
  IntMatrix ifm_index;     // input channel of entry (j, i); empty for dense rows
  std::vector<int> adder;  // accumulator fl per output channel
  std::vector<int> bias;   // bias fl per output channel
  std::vector<int> shift;  // accumulator -> output right shift per output channel
  IntMatrix in_shift;      // add/concat: per operand, per channel right shift
};

struct QuantPlan {
  PlanMode mode = PlanMode::cw_max;
  int bits = 8;
  std::map<std::string, TensorFormat> tensors;
  std::map<std::string, LayerFormat> layers;

  const TensorFormat& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw GraphError("plan has no format for tensor '" + name + "'");
    return it->second;
  }
  const LayerFormat& layer(const std::string& node) const {
    auto it = layers.find(node);
    if (it == layers.end()) throw GraphError("plan has no layer entry for node '" + node + "'");
    return it->second;
  }
};

namespace detail {

inline bool is_pool(LayerKind k) { return k == LayerKind::maxpool || k == LayerKind::avgpool; }

/// Unsigned-format decision for every tensor, in graph order.
inline std::map<std::string, bool> unsigned_tensors(const Graph& g) {
  std::map<std::string, bool> u;
  u[g.input_name] = false;
  for (const Node& n : g.nodes) {
    bool uns = n.kind == LayerKind::relu || n.consumer_activation == Activation::relu;
    if (!uns && (is_pool(n.kind) || n.kind == LayerKind::concat || n.kind == LayerKind::add)) {
      uns = std::all_of(n.inputs.begin(), n.inputs.end(), [&](const std::string& t) { return u.at(t); });
    }
    u[n.output] = uns;
  }
  return u;
}

/// Follows relu/pool nodes back to the node whose output carries stats-derived fls.
inline const Node* format_source(const Graph& g, std::string tensor) {
  for (;;) {
    const Node* p = g.producer(tensor);
    if (!p) return nullptr;
    if (p->kind == LayerKind::relu || is_pool(p->kind)) {
      tensor = p->inputs.at(0);
      continue;
    }
    return p;
  }
}

inline double reference_max(const ChannelStats& s, bool is_signed) {
  return is_signed ? s.max_abs() : std::max(s.max, 0.0);
}

struct FlChoice {
  int fl = 0;
  std::string family;
};

inline FlChoice fl_for_stats(const ChannelStats& s, PlanMode mode, int bits, bool is_signed, const KnnModel* knn) {
  switch (mode) {
    case PlanMode::layerwise_max:
    case PlanMode::cw_max: return {fl_from_max(reference_max(s, is_signed), bits, is_signed), {}};
    case PlanMode::cw_laplace: return {optimal_fl(s, PdfFamily::laplace, bits, is_signed), {}};
    case PlanMode::cw_scauchy: return {optimal_fl(s, PdfFamily::super_cauchy, bits, is_signed), {}};
    case PlanMode::cw_pdf_aware: {
      PdfFamily fam = PdfFamily::laplace;
      if (const auto f = standardized_moments(s)) fam = classify_pdf(*f, *knn);
      return {optimal_fl(s, fam, bits, is_signed), family_name(fam)};
    }
  }
  throw ContractError("fl_for_stats: unknown mode");
}

inline TensorFormat stats_format(const TensorStats& ts, std::size_t channels, PlanMode mode, int bits, bool is_signed,
                                 bool single, const KnnModel* knn) {
  TensorFormat f;
  f.bits = bits;
  f.is_signed = is_signed;
  f.from_stats = true;
  if (ts.channels.size() != channels) throw GraphError("statistics have the wrong channel count");
  if (single || mode == PlanMode::layerwise_max) {
    const FlChoice c = fl_for_stats(ts.pooled, mode, bits, is_signed, knn);
    f.fl.assign(channels, c.fl);
    if (mode == PlanMode::cw_pdf_aware) f.family.assign(channels, c.family);
    return f;
  }
  for (const ChannelStats& s : ts.channels) {
    const FlChoice c = fl_for_stats(s, mode, bits, is_signed, knn);
    f.fl.push_back(c.fl);
    if (mode == PlanMode::cw_pdf_aware) f.family.push_back(c.family);
  }
  return f;
}

inline double max_abs_of(std::span<const float> xs) {
  double m = 0.0;
  for (float v : xs) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

inline LayerFormat linear_layer_format(const Graph& g, const Node& n, const TensorFormat& ifm, const TensorFormat& ofm,
                                       PlanMode mode, int bits) {
  const Tensor& w = n.param("weight");
  const std::size_t co = w.dim(0);
  const std::size_t per_row = w.size() / co;
  LayerFormat lf;
  lf.kind = n.kind;
  lf.ker_floor = fl_from_max(max_abs_of(w.data()), bits, true);

  const Node* src = format_source(g, n.inputs.at(0));
  const bool fc_after_fc = n.kind == LayerKind::fc && src && src->kind == LayerKind::fc;
  const bool layerwise = mode == PlanMode::layerwise_max || fc_after_fc;

  IntMatrix tight(co);
  if (n.kind == LayerKind::depthwise_conv) {
    lf.ifm_index.resize(co);
    for (std::size_t j = 0; j < co; ++j) {
      tight[j] = {layerwise ? lf.ker_floor : fl_from_max(max_abs_of(w.data().subspan(j * per_row, per_row)), bits, true)};
      lf.ifm_index[j] = {static_cast<int>(j)};
    }
  } else {
    // One kernel slice per input channel; for fc over a [C, H, W] input a
    // channel is the block of H*W features it contributes.
    const std::size_t ci = ifm.fl.size();
    if (per_row % ci != 0) throw GraphError("node '" + n.name + "': weight columns do not split into input channels");
    const std::size_t slice = per_row / ci;
    for (std::size_t j = 0; j < co; ++j) {
      tight[j].resize(ci);
      for (std::size_t i = 0; i < ci; ++i) {
        tight[j][i] = layerwise ? lf.ker_floor
                                : fl_from_max(max_abs_of(w.data().subspan(j * per_row + i * slice, slice)), bits, true);
      }
    }
  }
  const Coordination c = coordinate_layer(ifm.fl, tight, ofm.fl, lf.ker_floor, lf.ifm_index);
  lf.ker = c.ker;
  lf.comp = c.comp;
  lf.adder = c.adder;
  lf.bias = c.bias;
  lf.shift = c.shift;
  return lf;
}

}  // namespace detail

/// Solves a complete plan. `knn` is required for cw_pdf_aware.
inline QuantPlan solve_plan(const Graph& g, const ProfileStats& stats, PlanMode mode, int bits = 8,
                            const KnnModel* knn = nullptr) {
  if (bits < 2 || bits > 16) throw UsageError("bit width must be in [2, 16], got " + std::to_string(bits));
  if (mode == PlanMode::cw_pdf_aware && !knn) throw UsageError("cw_pdf_aware needs a kNN classifier model");
  QuantPlan plan;
  plan.mode = mode;
  plan.bits = bits;
  const auto uns = detail::unsigned_tensors(g);
  auto stats_of = [&](const std::string& t) -> const TensorStats& {
    auto it = stats.activations.find(t);
    if (it == stats.activations.end()) throw GraphError("missing statistics for tensor '" + t + "'");
    return it->second;
  };

  plan.tensors[g.input_name] = detail::stats_format(stats_of(g.input_name), g.channels(g.input_name), mode, bits,
                                                    !uns.at(g.input_name), false, knn);
  for (const Node& n : g.nodes) {
    const bool is_signed = !uns.at(n.output);
    const std::size_t channels = g.channels(n.output);
    switch (n.kind) {
      case LayerKind::conv:
      case LayerKind::depthwise_conv:
      case LayerKind::fc: {
        const bool single = n.kind == LayerKind::fc;
        plan.tensors[n.output] = detail::stats_format(stats_of(n.output), channels, mode, bits, is_signed, single, knn);
        plan.layers[n.name] = detail::linear_layer_format(g, n, plan.tensor(n.inputs[0]), plan.tensor(n.output), mode, bits);
        break;
      }
      case LayerKind::relu:
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        TensorFormat f = plan.tensor(n.inputs[0]);
        f.from_stats = false;
        f.is_signed = is_signed;
        plan.tensors[n.output] = f;
        break;
      }
      case LayerKind::add: {
        TensorFormat out = detail::stats_format(stats_of(n.output), channels, mode, bits, is_signed, false, knn);
        const TensorFormat& a = plan.tensor(n.inputs[0]);
        const TensorFormat& b = plan.tensor(n.inputs[1]);
        LayerFormat lf;
        lf.kind = n.kind;
        lf.in_shift.assign(2, std::vector<int>(channels));
        for (std::size_t c = 0; c < channels; ++c) {
          const int aligned = std::min(a.fl[c], b.fl[c]);
          lf.adder.push_back(aligned);
          lf.in_shift[0][c] = a.fl[c] - aligned;
          lf.in_shift[1][c] = b.fl[c] - aligned;
          lf.shift.push_back(aligned - out.fl[c]);
        }
        plan.tensors[n.output] = std::move(out);
        plan.layers[n.name] = std::move(lf);
        break;
      }
      case LayerKind::concat: {
        TensorFormat out;
        out.bits = bits;
        out.is_signed = is_signed;
        out.from_stats = false;
        LayerFormat lf;
        lf.kind = n.kind;
        int common = QFormat::kMaxFl;
        for (const auto& t : n.inputs) {
          for (int f : plan.tensor(t).fl) common = std::min(common, f);
        }
        for (const auto& t : n.inputs) {
          const TensorFormat& in = plan.tensor(t);
          const int recode = (is_signed && !in.is_signed) ? 1 : 0;
          std::vector<int> shifts;
          for (std::size_t c = 0; c < in.fl.size(); ++c) {
            const int target = (mode == PlanMode::layerwise_max ? common : in.fl[c]) - recode;
            shifts.push_back(in.fl[c] - target);
            out.fl.push_back(target);
            if (!in.family.empty()) out.family.push_back(in.family[c]);
          }
          lf.in_shift.push_back(std::move(shifts));
        }
        if (out.family.size() != out.fl.size()) out.family.clear();
        plan.tensors[n.output] = std::move(out);
        plan.layers[n.name] = std::move(lf);
        break;
      }
      case LayerKind::batchnorm:
        throw GraphError("node '" + n.name + "': fold batchnorm layers before solving a plan");
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const QuantPlan& p) {
  nlohmann::json j;
  j["version"] = 1;
  j["mode"] = mode_name(p.mode);
  j["bits"] = p.bits;
  j["tensors"] = nlohmann::json::object();
  for (const auto& [name, t] : p.tensors) {
    nlohmann::json jt{{"signed", t.is_signed}, {"source", t.from_stats ? "stats" : "inherited"}, {"fl", t.fl}};
    if (t.bits != p.bits) jt["bits"] = t.bits;
    if (!t.family.empty()) jt["family"] = t.family;
    j["tensors"][name] = std::move(jt);
  }
  j["layers"] = nlohmann::json::object();
  for (const auto& [name, l] : p.layers) {
    nlohmann::json jl{{"kind", kind_name(l.kind)}};
    if (is_linear(l.kind)) {
      jl["ker_floor"] = l.ker_floor;
      jl["ker"] = l.ker;
      jl["comp"] = l.comp;
      jl["bias"] = l.bias;
      if (!l.ifm_index.empty()) jl["ifm_index"] = l.ifm_index;
    }
    if (!l.adder.empty()) jl["adder"] = l.adder;
    if (!l.shift.empty()) jl["shift"] = l.shift;
    if (!l.in_shift.empty()) jl["in_shift"] = l.in_shift;
    j["layers"][name] = std::move(jl);
  }
  return j;
}

inline QuantPlan plan_from_json(const nlohmann::json& j) {
  try {
    if (j.value("version", 0) != 1) throw FormatError("plan: unsupported version");
    QuantPlan p;
    const auto mode = parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw FormatError("plan: unknown mode");
    p.mode = *mode;
    p.bits = j.at("bits").get<int>();
    for (const auto& [name, jt] : j.at("tensors").items()) {
      TensorFormat t;
      t.bits = jt.value("bits", p.bits);
      t.is_signed = jt.at("signed").get<bool>();
      t.from_stats = jt.at("source").get<std::string>() == "stats";
      t.fl = jt.at("fl").get<std::vector<int>>();
      if (jt.contains("family")) t.family = jt.at("family").get<std::vector<std::string>>();
      p.tensors.emplace(name, std::move(t));
    }
    for (const auto& [name, jl] : j.at("layers").items()) {
      LayerFormat l;
      const auto kind = parse_kind(jl.at("kind").get<std::string>());
      if (!kind) throw FormatError("plan: unknown layer kind in '" + name + "'");
      l.kind = *kind;
      if (is_linear(l.kind)) {
        l.ker_floor = jl.at("ker_floor").get<int>();
        l.ker = jl.at("ker").get<IntMatrix>();
        l.comp = jl.at("comp").get<IntMatrix>();
        l.bias = jl.at("bias").get<std::vector<int>>();
        if (jl.contains("ifm_index")) l.ifm_index = jl.at("ifm_index").get<IntMatrix>();
      }
      if (jl.contains("adder")) l.adder = jl.at("adder").get<std::vector<int>>();
      if (jl.contains("shift")) l.shift = jl.at("shift").get<std::vector<int>>();
      if (jl.contains("in_shift")) l.in_shift = jl.at("in_shift").get<IntMatrix>();
      p.layers.emplace(name, std::move(l));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
}

}  // namespace chanq
