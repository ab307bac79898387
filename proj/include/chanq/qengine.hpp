// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Bit-exact fixed-point executor.
//
// A conv output channel j is computed as
//   acc  = bias_code_j                                  (accumulator at fl_adder_j)
//   acc += round_shift(sum_window(ifm_i * ker_ji), s_ji) for every input channel i
//   ofm  = rounding_shift(acc, shift_j) into the output format
// with saturation at every narrowing. The accumulator is 32 bits for operands of
// up to 8 bits and 2B + 16 bits beyond that. An unsigned output format clamps
// negative accumulators to zero, which is how a following relu is realized.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "chanq/executor.hpp"
#include "chanq/fixed_point.hpp"
#include "chanq/graph.hpp"
#include "chanq/plan.hpp"

namespace chanq {

struct QuantizedLayer {
  CodeTensor kernel;               // same dims as the float weight
  std::vector<std::int64_t> bias;  // accumulator codes at fl_bias_j
};

struct QuantizedGraph {
  Graph graph;
  QuantPlan plan;
  std::map<std::string, QuantizedLayer> layers;
  std::size_t param_saturations = 0;
};

namespace detail {

/// Column range of kernel entry (j, i) inside a weight row.
struct SliceMap {
  std::size_t per_row = 0;
  std::size_t slice = 0;  // columns per input channel
};

inline SliceMap slice_map(const Node& n, const LayerFormat& lf) {
  const Tensor& w = n.param("weight");
  SliceMap m;
  m.per_row = w.size() / w.dim(0);
  m.slice = n.kind == LayerKind::depthwise_conv ? m.per_row : m.per_row / lf.ker.at(0).size();
  return m;
}

inline void check_layer_shape(const Node& n, const LayerFormat& lf) {
  const Tensor& w = n.param("weight");
  const std::size_t co = w.dim(0);
  if (lf.ker.size() != co || lf.comp.size() != co || lf.bias.size() != co || lf.shift.size() != co) {
    throw GraphError("plan does not match layer '" + n.name + "': output channel count differs");
  }
  const std::size_t per_row = w.size() / co;
  for (std::size_t j = 0; j < co; ++j) {
    if (lf.ker[j].empty() || per_row % lf.ker[j].size() != 0 || lf.comp[j].size() != lf.ker[j].size()) {
      throw GraphError("plan does not match layer '" + n.name + "': kernel table has the wrong shape");
    }
  }
}

}  // namespace detail

/// Quantizes kernels per (j, i) slice at the adjusted fls and biases into the
/// accumulator format at fl_bias_j.
inline QuantizedGraph quantize_params(const Graph& g, const QuantPlan& plan) {
  QuantizedGraph qg{g, plan, {}, 0};
  for (const Node& n : g.nodes) {
    if (!is_linear(n.kind)) continue;
    const LayerFormat& lf = plan.layer(n.name);
    detail::check_layer_shape(n, lf);
    const Tensor& w = n.param("weight");
    const std::size_t co = w.dim(0);
    const auto map = detail::slice_map(n, lf);
    QuantizedLayer ql;
    ql.kernel = CodeTensor(w.dims());
    for (std::size_t j = 0; j < co; ++j) {
      for (std::size_t i = 0; i < lf.ker[j].size(); ++i) {
        const QFormat q{plan.bits, lf.ker[j][i], true};
        for (std::size_t k = 0; k < map.slice; ++k) {
          const std::size_t idx = j * map.per_row + i * map.slice + k;
          bool sat = false;
          ql.kernel[idx] = static_cast<std::int32_t>(quantize(w[idx], q, &sat));
          if (sat) ++qg.param_saturations;
        }
      }
      const double b = n.has_param("bias") ? n.param("bias")[j] : 0.0;
      bool sat = false;
      ql.bias.push_back(quantize(b, accumulator_format(plan.bits, lf.bias[j]), &sat));
      if (sat) ++qg.param_saturations;
    }
    qg.layers.emplace(n.name, std::move(ql));
  }
  return qg;
}

struct QuantCounters {
  std::size_t accumulator_saturations = 0;
  std::size_t output_saturations = 0;
};

struct QuantRun {
  Tensor output;  // dequantized
  std::map<std::string, CodeTensor> captured;
  QuantCounters counters;
};

/// Quantizes a float tensor channel by channel.
inline CodeTensor quantize_tensor(const Tensor& t, const TensorFormat& f, std::size_t* saturations = nullptr) {
  CodeTensor out(t.dims());
  const std::size_t c = t.channels(), p = t.plane();
  if (f.fl.size() != c) throw GraphError("tensor format has " + std::to_string(f.fl.size()) + " channels, tensor has " + std::to_string(c));
  for (std::size_t n = 0; n < t.batch(); ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const QFormat q = f.format(ch);
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t idx = (n * c + ch) * p + k;
        bool sat = false;
        out[idx] = static_cast<std::int32_t>(quantize(t[idx], q, &sat));
        if (sat && saturations) ++*saturations;
      }
    }
  }
  return out;
}

inline Tensor dequantize_tensor(const CodeTensor& t, const TensorFormat& f) {
  Tensor out(t.dims());
  const std::size_t c = t.channels(), p = t.plane();
  for (std::size_t n = 0; n < t.batch(); ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const QFormat q = f.format(ch);
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t idx = (n * c + ch) * p + k;
        out[idx] = static_cast<float>(dequantize(t[idx], q));
      }
    }
  }
  return out;
}

namespace detail {

inline std::int64_t divide_half_even(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den, r = num % den;
  if (r < 0) {
    r += den;
    --q;
  }
  if (2 * r > den || (2 * r == den && (q & 1))) ++q;
  return q;
}

class QuantExecutor {
 public:
  QuantExecutor(const QuantizedGraph& qg, QuantCounters& counters) : qg_(qg), plan_(qg.plan), counters_(counters) {}

  CodeTensor run(const Node& n, const std::vector<const CodeTensor*>& in) {
    switch (n.kind) {
      case LayerKind::conv:
      case LayerKind::depthwise_conv: return conv(n, *in[0]);
      case LayerKind::fc: return fc(n, *in[0]);
      case LayerKind::relu: return relu(n, *in[0]);
      case LayerKind::maxpool:
      case LayerKind::avgpool: return pool(n, *in[0]);
      case LayerKind::add: return add(n, *in[0], *in[1]);
      case LayerKind::concat: return concat(n, in);
      case LayerKind::batchnorm: break;
    }
    throw GraphError("node '" + n.name + "': batchnorm must be folded before fixed-point execution");
  }

 private:
  std::int32_t narrow(std::int64_t acc, int shift, const QFormat& out) {
    if (!out.is_signed && acc <= 0) return 0;  // the relu clamp, not an overflow
    bool sat = false;
    const std::int64_t v = rounding_shift(acc, shift, out, &sat);
    if (sat) ++counters_.output_saturations;
    return static_cast<std::int32_t>(v);
  }

  CodeTensor conv(const Node& n, const CodeTensor& x) {
    const LayerFormat& lf = plan_.layer(n.name);
    const QuantizedLayer& ql = qg_.layers.at(n.name);
    const TensorFormat& of = plan_.tensor(n.output);
    const bool depthwise = n.kind == LayerKind::depthwise_conv;
    const std::size_t nb = x.dim(0), h = x.dim(2), w = x.dim(3);
    const CodeTensor& k = ql.kernel;
    const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const Hw st = n.stride(), pd = n.pad();
    const std::size_t oh = conv_out_extent(h, kh, st.h, pd.h), ow = conv_out_extent(w, kw, st.w, pd.w);
    CodeTensor out({nb, co, oh, ow});
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t oc = 0; oc < co; ++oc) {
        const QFormat acc_fmt = accumulator_format(plan_.bits, lf.adder[oc]);
        const QFormat out_fmt = of.format(oc);
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t xo = 0; xo < ow; ++xo) {
            Accumulator acc(acc_fmt, ql.bias[oc]);
            for (std::size_t e = 0; e < lf.ker[oc].size(); ++e) {
              const std::size_t ic = depthwise ? oc : e;
              const std::size_t kc = depthwise ? 0 : e;
              std::int64_t psum = 0;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(y * st.h + ky) - static_cast<std::ptrdiff_t>(pd.h);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const auto ix = static_cast<std::ptrdiff_t>(xo * st.w + kx) - static_cast<std::ptrdiff_t>(pd.w);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  psum += static_cast<std::int64_t>(x.at(b, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix))) *
                          k.at(oc, kc, ky, kx);
                }
              }
              acc.add(round_shift_right(psum, lf.comp[oc][e]));
            }
            counters_.accumulator_saturations += acc.saturations();
            out.at(b, oc, y, xo) = narrow(acc.value(), lf.shift[oc], out_fmt);
          }
        }
      }
    }
    return out;
  }

  CodeTensor fc(const Node& n, const CodeTensor& x) {
    const LayerFormat& lf = plan_.layer(n.name);
    const QuantizedLayer& ql = qg_.layers.at(n.name);
    const TensorFormat& of = plan_.tensor(n.output);
    const std::size_t nb = x.dim(0), d = x.size() / nb;
    const std::size_t u = ql.kernel.dim(0);
    const std::size_t groups = lf.ker.at(0).size(), slice = d / groups;
    CodeTensor out({nb, u});
    for (std::size_t b = 0; b < nb; ++b) {
      const std::int32_t* xr = x.data().data() + b * d;
      for (std::size_t j = 0; j < u; ++j) {
        const std::int32_t* wr = ql.kernel.data().data() + j * d;
        Accumulator acc(accumulator_format(plan_.bits, lf.adder[j]), ql.bias[j]);
        for (std::size_t i = 0; i < groups; ++i) {
          std::int64_t psum = 0;
          for (std::size_t k = i * slice; k < (i + 1) * slice; ++k) psum += static_cast<std::int64_t>(xr[k]) * wr[k];
          acc.add(round_shift_right(psum, lf.comp[j][i]));
        }
        counters_.accumulator_saturations += acc.saturations();
        out[b * u + j] = narrow(acc.value(), lf.shift[j], of.format(j));
      }
    }
    return out;
  }

  // Clamping at zero and reading the codes as unsigned keeps the fl; values always fit.
  static CodeTensor relu(const Node&, const CodeTensor& x) {
    CodeTensor out = x;
    for (auto& v : out.data()) v = std::max(v, 0);
    return out;
  }

  CodeTensor pool(const Node& n, const CodeTensor& x) {
    const TensorFormat& of = plan_.tensor(n.output);
    const Hw win = n.window(), st = n.stride(), pd = n.pad();
    const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = conv_out_extent(h, win.h, st.h, pd.h), ow = conv_out_extent(w, win.w, st.w, pd.w);
    const auto area = static_cast<std::int64_t>(win.h * win.w);
    const bool pow2 = (area & (area - 1)) == 0;
    int log2_area = 0;
    while ((std::int64_t{1} << log2_area) < area) ++log2_area;
    const bool is_max = n.kind == LayerKind::maxpool;
    CodeTensor out({nb, c, oh, ow});
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const QFormat q = of.format(ch);
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t xo = 0; xo < ow; ++xo) {
            std::int64_t sum = 0;
            std::int64_t best = std::numeric_limits<std::int64_t>::min();
            for (std::size_t ky = 0; ky < win.h; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(y * st.h + ky) - static_cast<std::ptrdiff_t>(pd.h);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < win.w; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(xo * st.w + kx) - static_cast<std::ptrdiff_t>(pd.w);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::int64_t v = x.at(b, ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                sum += v;
                best = std::max(best, v);
              }
            }
            std::int64_t v = is_max ? best : (pow2 ? round_shift_right(sum, log2_area) : divide_half_even(sum, area));
            bool sat = false;
            v = saturate(v, q, &sat);
            if (sat) ++counters_.output_saturations;
            out.at(b, ch, y, xo) = static_cast<std::int32_t>(v);
          }
        }
      }
    }
    return out;
  }

  CodeTensor add(const Node& n, const CodeTensor& a, const CodeTensor& b) {
    const LayerFormat& lf = plan_.layer(n.name);
    const TensorFormat& of = plan_.tensor(n.output);
    CodeTensor out(a.dims());
    const std::size_t c = a.channels(), p = a.plane();
    for (std::size_t s = 0; s < a.batch(); ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const QFormat acc_fmt = accumulator_format(plan_.bits, lf.adder[ch]);
        const QFormat q = of.format(ch);
        for (std::size_t k = 0; k < p; ++k) {
          const std::size_t idx = (s * c + ch) * p + k;
          Accumulator acc(acc_fmt, round_shift_right(a[idx], lf.in_shift[0][ch]));
          acc.add(round_shift_right(b[idx], lf.in_shift[1][ch]));
          counters_.accumulator_saturations += acc.saturations();
          out[idx] = narrow(acc.value(), lf.shift[ch], q);
        }
      }
    }
    return out;
  }

  CodeTensor concat(const Node& n, const std::vector<const CodeTensor*>& in) {
    const LayerFormat& lf = plan_.layer(n.name);
    const TensorFormat& of = plan_.tensor(n.output);
    Shape d = in[0]->dims();
    d[1] = 0;
    for (const CodeTensor* t : in) d[1] += t->dim(1);
    CodeTensor out(d);
    const std::size_t p = in[0]->plane(), ctot = d[1];
    for (std::size_t s = 0; s < d[0]; ++s) {
      std::size_t base = 0;
      for (std::size_t t = 0; t < in.size(); ++t) {
        const CodeTensor& x = *in[t];
        for (std::size_t ch = 0; ch < x.dim(1); ++ch) {
          const QFormat q = of.format(base + ch);
          const int sh = lf.in_shift[t][ch];
          for (std::size_t k = 0; k < p; ++k) {
            out[(s * ctot + base + ch) * p + k] = narrow(x[(s * x.dim(1) + ch) * p + k], sh, q);
          }
        }
        base += x.dim(1);
      }
    }
    return out;
  }

  const QuantizedGraph& qg_;
  const QuantPlan& plan_;
  QuantCounters& counters_;
};

}  // namespace detail

/// Fixed-point forward pass. Captured tensors hold the integer codes of node
/// outputs (and of the quantized graph input) in the plan's formats.
inline QuantRun execute_quantized(const QuantizedGraph& qg, const Tensor& input, const CaptureSet& capture = {}) {
  const Graph& g = qg.graph;
  Shape expected{input.batch()};
  expected.insert(expected.end(), g.input_dims.begin(), g.input_dims.end());
  if (input.dims() != expected) {
    throw ShapeError("input dims " + to_string(input.dims()) + " do not match graph input " + to_string(g.input_dims));
  }
  QuantRun run;
  std::map<std::string, std::size_t> remaining;
  for (const Node& n : g.nodes) {
    for (const auto& t : n.inputs) ++remaining[t];
  }
  std::map<std::string, CodeTensor> live;
  live.emplace(g.input_name, quantize_tensor(input, qg.plan.tensor(g.input_name), &run.counters.output_saturations));
  if (capture.contains(g.input_name)) run.captured.emplace(g.input_name, live.at(g.input_name));
  detail::QuantExecutor ex(qg, run.counters);
  for (const Node& n : g.nodes) {
    std::vector<const CodeTensor*> in;
    for (const auto& t : n.inputs) in.push_back(&live.at(t));
    CodeTensor out;
    try {
      out = ex.run(n, in);
    } catch (const ShapeError& e) {
      throw ShapeError("node '" + n.name + "': " + e.what());
    }
    for (const auto& t : n.inputs) {
      if (--remaining[t] == 0 && t != g.output_name) live.erase(t);
    }
    if (capture.contains(n.output)) run.captured.emplace(n.output, out);
    live.insert_or_assign(n.output, std::move(out));
  }
  run.output = dequantize_tensor(live.at(g.output_name), qg.plan.tensor(g.output_name));
  return run;
}

// ---------------------------------------------------------------------------
// SQNR

/// SQNR in dB from accumulated sums: +inf when the noise is zero, NaN
/// ("undefined") when the reference signal is zero.
inline double sqnr_from_sums(double signal, double noise) {
  if (!(signal > 0)) return std::numeric_limits<double>::quiet_NaN();
  if (!(noise > 0)) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

struct TensorSqnr {
  std::vector<double> signal, noise;  // per channel sums
  double pooled_signal = 0.0, pooled_noise = 0.0;

  double channel_db(std::size_t c) const { return sqnr_from_sums(signal.at(c), noise.at(c)); }
  double pooled_db() const { return sqnr_from_sums(pooled_signal, pooled_noise); }
};

struct SqnrReport {
  std::map<std::string, TensorSqnr> tensors;

  /// Adds one batch: the float activation and the integer codes of the same tensor.
  /// For unsigned formats the reference is max(x, 0).
  void add(const std::string& name, const Tensor& reference, const CodeTensor& codes, const TensorFormat& f) {
    if (reference.dims() != codes.dims()) throw ShapeError("sqnr: capture shapes differ for '" + name + "'");
    TensorSqnr& t = tensors[name];
    const std::size_t c = reference.channels(), p = reference.plane();
    if (t.signal.empty()) {
      t.signal.assign(c, 0.0);
      t.noise.assign(c, 0.0);
    }
    for (std::size_t n = 0; n < reference.batch(); ++n) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const QFormat q = f.format(ch);
        double s = 0.0, e = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
          const std::size_t idx = (n * c + ch) * p + k;
          const double x = f.is_signed ? reference[idx] : std::max(reference[idx], 0.0f);
          const double d = x - dequantize(codes[idx], q);
          s += x * x;
          e += d * d;
        }
        t.signal[ch] += s;
        t.noise[ch] += e;
        t.pooled_signal += s;
        t.pooled_noise += e;
      }
    }
  }
};

/// Per-tensor, per-channel SQNR of matching float and integer capture sets.
inline SqnrReport sqnr_report(const std::map<std::string, Tensor>& float_acts,
                              const std::map<std::string, CodeTensor>& quant_acts, const QuantPlan& plan) {
  SqnrReport r;
  for (const auto& [name, codes] : quant_acts) {
    auto it = float_acts.find(name);
    if (it == float_acts.end()) throw GraphError("sqnr: no float capture for tensor '" + name + "'");
    r.add(name, it->second, codes, plan.tensor(name));
  }
  return r;
}

inline nlohmann::json db_to_json(double db) {
  if (std::isnan(db)) return "undefined";
  if (std::isinf(db)) return "inf";
  return db;
}

}  // namespace chanq
