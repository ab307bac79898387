// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

namespace chanq {
namespace {

using testing::conv_node;
using testing::make_node;
using testing::make_tensor;
using testing::random_tensor;

TensorFormat fmt(std::vector<int> fl, bool is_signed = true, int bits = 8) {
  TensorFormat f;
  f.bits = bits;
  f.is_signed = is_signed;
  f.fl = std::move(fl);
  return f;
}

// One 1x1 conv on a 1x1x1 input with a hand-written plan.
struct SingleMac {
  Graph g;
  QuantPlan plan;

  SingleMac(float weight, float bias, int fl_in, int fl_ker, int fl_out) {
    g.input_dims = {1, 1, 1};
    g.nodes.push_back(conv_node("conv", "input", "out", make_tensor({1, 1, 1, 1}, {weight}), make_tensor({1}, {bias})));
    g = validate(std::move(g));
    plan.tensors["input"] = fmt({fl_in});
    plan.tensors["out"] = fmt({fl_out});
    LayerFormat lf;
    lf.ker = {{fl_ker}};
    lf.ker_floor = fl_ker;
    lf.comp = {{0}};
    lf.adder = {fl_in + fl_ker};
    lf.bias = lf.adder;
    lf.shift = {fl_in + fl_ker - fl_out};
    plan.layers["conv"] = lf;
  }
};

TEST(QuantizeParams, Examples) {
  SingleMac a(0.5f, 1.0f, 0, 6, 0);
  a.plan.layers["conv"].bias = {7};
  const QuantizedGraph qa = quantize_params(a.g, a.plan);
  EXPECT_EQ(qa.layers.at("conv").kernel[0], 32);
  EXPECT_EQ(qa.layers.at("conv").bias[0], 128);
  EXPECT_EQ(qa.param_saturations, 0u);

  SingleMac edge(static_cast<float>(127.0 / 64.0), 0.0f, 0, 6, 0);
  const QuantizedGraph qe = quantize_params(edge.g, edge.plan);
  EXPECT_EQ(qe.layers.at("conv").kernel[0], 127);
  EXPECT_EQ(qe.param_saturations, 0u);

  SingleMac over(2.5f, 0.0f, 0, 6, 0);
  EXPECT_EQ(quantize_params(over.g, over.plan).layers.at("conv").kernel[0], 127);
  EXPECT_EQ(quantize_params(over.g, over.plan).param_saturations, 1u);
}

TEST(QuantizeParams, PlanMismatch) {
  SingleMac a(0.5f, 0.0f, 0, 6, 0);
  a.plan.layers["conv"].ker = {{6}, {6}};
  EXPECT_THROW(quantize_params(a.g, a.plan), GraphError);
  a.plan.layers.clear();
  EXPECT_THROW(quantize_params(a.g, a.plan), GraphError);
}

TEST(ExecuteQuantized, SingleMacSaturates) {
  // ifm code 32 at fl 6, ker code 16 at fl 5: acc 512 at fl 11, shift 2 -> 128 -> 127.
  SingleMac m(0.5f, 0.0f, 6, 5, 9);
  const QuantizedGraph qg = quantize_params(m.g, m.plan);
  EXPECT_EQ(qg.layers.at("conv").kernel[0], 16);
  const QuantRun r = execute_quantized(qg, make_tensor({1, 1, 1, 1}, {0.5f}), CaptureSet::everything());
  EXPECT_EQ(r.captured.at("input")[0], 32);
  EXPECT_EQ(r.captured.at("out")[0], 127);
  EXPECT_EQ(r.counters.output_saturations, 1u);
  EXPECT_EQ(r.counters.accumulator_saturations, 0u);
  EXPECT_FLOAT_EQ(r.output[0], 127.0f / 512.0f);
}

TEST(ExecuteQuantized, ZeroInputGivesShiftedBias) {
  SingleMac m(0.75f, 0.3f, 6, 5, 7);
  const QuantizedGraph qg = quantize_params(m.g, m.plan);
  const std::int64_t bias = qg.layers.at("conv").bias[0];
  EXPECT_EQ(bias, 614);  // round(0.3 * 2^11)
  const QuantRun r = execute_quantized(qg, make_tensor({1, 1, 1, 1}, {0.0f}), CaptureSet::everything());
  EXPECT_EQ(r.captured.at("out")[0], 38);  // 614 / 16 = 38.375
  EXPECT_NEAR(r.output[0], 0.3, 0.5 / 128.0);
}

TEST(ExecuteQuantized, IdentityConvKeepsCodes) {
  const Graph g = testing::identity_graph(3, 4, 4);
  QuantPlan plan;
  plan.tensors["input"] = fmt({2, 5, -1});
  plan.tensors["out"] = fmt({2, 5, -1});
  LayerFormat lf;
  lf.ker = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  lf.comp = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  lf.adder = {2, 5, -1};
  lf.bias = lf.adder;
  lf.shift = {0, 0, 0};
  plan.layers["conv"] = lf;
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(rng, {5, 3, 4, 4}, -20.0, 20.0);
  const QuantRun r = execute_quantized(quantize_params(g, plan), x, CaptureSet::everything());
  EXPECT_EQ(r.captured.at("out").data().size(), r.captured.at("input").data().size());
  EXPECT_TRUE(std::equal(r.captured.at("out").data().begin(), r.captured.at("out").data().end(),
                         r.captured.at("input").data().begin()));
  EXPECT_THROW(execute_quantized(quantize_params(g, plan), random_tensor(rng, {1, 2, 4, 4})), ShapeError);
}

// ---------------------------------------------------------------------------
// Layer-wise reference

std::int64_t ref_round_shift(std::int64_t v, int s) {
  if (s <= 0) return v * (std::int64_t{1} << -s);
  const std::int64_t d = std::int64_t{1} << s;
  std::int64_t q = v / d, r = v % d;
  if (r < 0) {
    r += d;
    --q;
  }
  if (2 * r > d || (2 * r == d && (q % 2 != 0))) ++q;
  return q;
}

std::int64_t ref_code(double v, int fl, std::int64_t lo, std::int64_t hi) {
  return std::clamp(static_cast<std::int64_t>(std::nearbyint(std::ldexp(v, fl))), lo, hi);
}

TEST(ExecuteQuantized, MatchesNaiveLayerwiseReference) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> dim(1, 4), kdim(1, 3), coin(0, 1);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ci = dim(rng), co = dim(rng), k = kdim(rng), hw = k + dim(rng);
    const std::size_t pad = coin(rng) ? k / 2 : 0, stride = coin(rng) + 1;
    const bool relu = coin(rng);
    Graph g;
    g.input_dims = {ci, hw, hw};
    const double ws = scale(rng);
    Node c = conv_node("conv", "input", "c", random_tensor(rng, {co, ci, k, k}, -ws, ws),
                       random_tensor(rng, {co}, -ws, ws));
    c.attrs.stride = Hw{stride, stride};
    c.attrs.pad = Hw{pad, pad};
    g.nodes.push_back(std::move(c));
    if (relu) g.nodes.push_back(make_node("relu", LayerKind::relu, {"c"}, "r"));
    g = validate(std::move(g));
    const double xs = scale(rng);
    const Tensor data = random_tensor(rng, {6, ci, hw, hw}, -xs, xs);
    const QuantPlan plan = solve_plan(g, collect_stats(g, data), PlanMode::layerwise_max);
    const QuantRun run = execute_quantized(quantize_params(g, plan), data, CaptureSet::everything());

    const int fi = plan.tensor("input").fl[0], fo = plan.tensor("c").fl[0];
    const int fk = plan.layer("conv").ker_floor;
    ASSERT_TRUE(plan.tensor("input").single_fl() && plan.tensor("c").single_fl());
    const Node& n = g.nodes[0];
    const Tensor& w = n.param("weight");
    const Tensor& b = n.param("bias");
    const std::int64_t out_lo = relu ? 0 : -128, out_hi = relu ? 255 : 127;
    const CodeTensor& got = run.captured.at("c");
    const std::size_t oh = got.dim(2), ow = got.dim(3);
    for (std::size_t s = 0; s < 6; ++s) {
      for (std::size_t j = 0; j < co; ++j) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            std::int64_t acc = ref_code(b[j], fk + fi, INT32_MIN, INT32_MAX);
            for (std::size_t i = 0; i < ci; ++i) {
              for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                  const auto ix = static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                  if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(hw) || ix >= static_cast<std::ptrdiff_t>(hw)) continue;
                  const std::int64_t xv = ref_code(data.at(s, i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)), fi, -128, 127);
                  const std::int64_t wv = ref_code(w.at(j, i, ky, kx), fk, -128, 127);
                  acc += xv * wv;
                }
              }
            }
            const std::int64_t expect = std::clamp(ref_round_shift(acc, fk + fi - fo), out_lo, out_hi);
            ASSERT_EQ(got.at(s, j, y, x), expect) << "trial " << trial;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Properties on small random graphs

Graph two_conv_graph(std::mt19937_64& rng, std::size_t channels = 4) {
  Graph g;
  g.input_dims = {3, 6, 6};
  Node a = conv_node("conv1", "input", "c1", random_tensor(rng, {channels, 3, 3, 3}, -0.5, 0.5),
                     random_tensor(rng, {channels}, -0.2, 0.2));
  a.attrs.pad = Hw{1, 1};
  g.nodes.push_back(std::move(a));
  g.nodes.push_back(make_node("relu1", LayerKind::relu, {"c1"}, "r1"));
  g.nodes.push_back(make_node("pool", LayerKind::maxpool, {"r1"}, "p1"));
  g.nodes.back().attrs.window = Hw{2, 2};
  g.nodes.push_back(conv_node("conv2", "p1", "c2", random_tensor(rng, {2, channels, 1, 1}, -1.0, 1.0),
                              random_tensor(rng, {2}, -0.1, 0.1)));
  return validate(std::move(g));
}

TEST(ExecuteQuantized, SixteenBitsBeatsEight) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = two_conv_graph(rng);
    const Tensor data = random_tensor(rng, {16, 3, 6, 6}, -2.0, 2.0);
    const ProfileStats ps = collect_stats(g, data);
    const FloatRun fr = execute_float(g, data, CaptureSet::everything());
    std::map<std::string, double> db8;
    for (int bits : {8, 16}) {
      const QuantPlan plan = solve_plan(g, ps, PlanMode::cw_max, bits);
      const QuantRun qr = execute_quantized(quantize_params(g, plan), data, CaptureSet::everything());
      const SqnrReport rep = sqnr_report(fr.captured, qr.captured, plan);
      for (const auto& [name, t] : rep.tensors) {
        if (bits == 8) {
          db8[name] = t.pooled_db();
        } else {
          EXPECT_GT(t.pooled_db(), db8.at(name)) << name << " trial " << trial;
        }
      }
    }
  }
}

TEST(ExecuteQuantized, BitExactReplay) {
  std::mt19937_64 rng(6);
  const Graph g = two_conv_graph(rng);
  const Tensor data = random_tensor(rng, {8, 3, 6, 6}, -2.0, 2.0);
  const QuantPlan plan = solve_plan(g, collect_stats(g, data), PlanMode::cw_laplace);
  const QuantizedGraph qg = quantize_params(g, plan);
  const QuantRun a = execute_quantized(qg, data, CaptureSet::everything());
  const QuantRun b = execute_quantized(qg, data, CaptureSet::everything());
  ASSERT_EQ(a.captured.size(), b.captured.size());
  const auto dir = testing::scratch_dir("replay");
  for (const auto& [name, codes] : a.captured) {
    write_code_tensor(dir / (name + "_a.qtsr"), codes, DType::i32);
    write_code_tensor(dir / (name + "_b.qtsr"), b.captured.at(name), DType::i32);
    EXPECT_EQ(testing::slurp(dir / (name + "_a.qtsr")), testing::slurp(dir / (name + "_b.qtsr"))) << name;
  }
}

TEST(QuantizeParams, Idempotent) {
  std::mt19937_64 rng(7);
  const Graph g = two_conv_graph(rng);
  const Tensor data = random_tensor(rng, {8, 3, 6, 6});
  const QuantPlan plan = solve_plan(g, collect_stats(g, data), PlanMode::cw_max);
  const QuantizedGraph q1 = quantize_params(g, plan);
  // Replace every parameter with its dequantized value and quantize again.
  Graph g2 = g;
  for (Node& n : g2.nodes) {
    if (!is_linear(n.kind)) continue;
    const LayerFormat& lf = plan.layer(n.name);
    const QuantizedLayer& ql = q1.layers.at(n.name);
    Tensor& w = n.params.at("weight");
    const std::size_t co = w.dim(0), per = w.size() / co, slice = per / lf.ker[0].size();
    for (std::size_t idx = 0; idx < w.size(); ++idx) {
      const std::size_t j = idx / per, i = (idx % per) / slice;
      w[idx] = static_cast<float>(dequantize(ql.kernel[idx], QFormat{8, lf.ker[j][i], true}));
    }
    Tensor& b = n.params.at("bias");
    for (std::size_t j = 0; j < co; ++j) {
      b[j] = static_cast<float>(dequantize(ql.bias[j], accumulator_format(8, lf.bias[j])));
    }
  }
  const QuantizedGraph q2 = quantize_params(g2, plan);
  for (const auto& [name, l1] : q1.layers) {
    const QuantizedLayer& l2 = q2.layers.at(name);
    EXPECT_TRUE(std::equal(l1.kernel.data().begin(), l1.kernel.data().end(), l2.kernel.data().begin())) << name;
    EXPECT_EQ(l1.bias, l2.bias) << name;
  }
}

TEST(ExecuteQuantized, ChannelwiseDominatesOnSpreadScales) {
  // 3x3 conv inside a heterogeneous stack: input channel i has scale s_i and
  // output channel j has scale s_j, with s spanning 2^0 .. 2^4.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t c = 8;
  auto s = [&](std::size_t j) { return std::exp2(4.0 * static_cast<double>(j) / static_cast<double>(c - 1)); };
  Tensor w({c, c, 3, 3});
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t k = 0; k < 9; ++k) w[(j * c + i) * 9 + k] = static_cast<float>(normal(rng) * s(j) / s(i) / std::sqrt(72.0));
    }
  }
  Graph g;
  g.input_dims = {c, 6, 6};
  Node n = conv_node("conv", "input", "out", std::move(w), Tensor({c}, 0.0f));
  n.attrs.pad = Hw{1, 1};
  g.nodes.push_back(std::move(n));
  g = validate(std::move(g));
  auto laplace_data = [&](std::size_t count) {
    std::exponential_distribution<double> e(1.0);
    Tensor t({count, c, 6, 6});
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t k = 0; k < 36; ++k) t[(b * c + ch) * 36 + k] = static_cast<float>((normal(rng) < 0 ? -1 : 1) * e(rng) * s(ch));
      }
    }
    return t;
  };
  const Tensor calib = laplace_data(100), test = laplace_data(100);
  const ProfileStats ps = collect_stats(g, calib);
  const FloatRun fr = execute_float(g, test, CaptureSet::everything());
  auto pooled = [&](PlanMode mode) {
    const QuantPlan plan = solve_plan(g, ps, mode);
    const QuantRun qr = execute_quantized(quantize_params(g, plan), test, CaptureSet::everything());
    return sqnr_report(fr.captured, qr.captured, plan).tensors.at("out").pooled_db();
  };
  const double lw = pooled(PlanMode::layerwise_max), cw = pooled(PlanMode::cw_max);
  EXPECT_GT(cw - lw, 3.0) << "layerwise " << lw << " dB, channel-wise " << cw << " dB";
}

// ---------------------------------------------------------------------------
// SQNR

TEST(Sqnr, Examples) {
  const TensorFormat f = fmt({4});
  const Tensor x = make_tensor({1, 1, 1, 4}, {1, 1, 1, 1});
  CodeTensor exact({1, 1, 1, 4}, 16);
  SqnrReport a;
  a.add("t", x, exact, f);
  EXPECT_TRUE(std::isinf(a.tensors.at("t").pooled_db()));
  EXPECT_GT(a.tensors.at("t").channel_db(0), 0.0);

  SqnrReport z;
  z.add("t", x, CodeTensor({1, 1, 1, 4}, 0), f);
  EXPECT_DOUBLE_EQ(z.tensors.at("t").pooled_db(), 0.0);

  EXPECT_NEAR(sqnr_from_sums(4.0, 4 * 0.01), 20.0, 1e-12);

  SqnrReport u;
  u.add("t", make_tensor({1, 1, 1, 4}, {0, 0, 0, 0}), CodeTensor({1, 1, 1, 4}, 1), f);
  EXPECT_TRUE(std::isnan(u.tensors.at("t").pooled_db()));
  EXPECT_EQ(db_to_json(u.tensors.at("t").pooled_db()), "undefined");
  EXPECT_EQ(db_to_json(a.tensors.at("t").pooled_db()), "inf");
}

TEST(Sqnr, UnsignedReferenceIsRectified) {
  const TensorFormat f = fmt({4}, false);
  SqnrReport r;
  r.add("t", make_tensor({1, 1, 1, 2}, {-3, 2}), CodeTensor({1, 1, 1, 2}, std::vector<std::int32_t>{0, 32}), f);
  EXPECT_TRUE(std::isinf(r.tensors.at("t").pooled_db()));
}

}  // namespace
}  // namespace chanq
