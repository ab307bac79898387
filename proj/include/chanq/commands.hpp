// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "chanq/distributions.hpp"
#include "chanq/executor.hpp"
#include "chanq/knn.hpp"
#include "chanq/model_io.hpp"
#include "chanq/plan.hpp"
#include "chanq/profiler.hpp"
#include "chanq/qengine.hpp"
#include "chanq/synthetic.hpp"
#include "chanq/transforms.hpp"

namespace chanq {

struct ExperimentConfig {
  std::filesystem::path model;
  std::filesystem::path weights;       // optional; defaults to the manifest's entry
  std::filesystem::path dataset;       // profiling set (f32 QTSR, batch-first)
  std::filesystem::path eval_dataset;  // evaluation set; falls back to `dataset`
  std::filesystem::path labels;        // optional i32 QTSR of ground-truth classes
  std::filesystem::path stats;         // stats file from cmd_profile
  std::filesystem::path plan;          // plan file from cmd_quantize
  std::filesystem::path knn;           // classifier file for cw_pdf_aware
  std::filesystem::path out;           // report / artifact path
  PlanMode mode = PlanMode::cw_pdf_aware;
  std::size_t profile_samples = 100;
  std::uint64_t seed = 1;
  int bits = 8;
  std::vector<std::string> capture;  // tensors whose integer codes are traced
  std::size_t batch_size = 16;

  void check() const {
    if (profile_samples < 1) throw UsageError("profile sample count must be at least 1");
    if (bits < 2 || bits > 16) throw UsageError("bit width must be in [2, 16]");
    if (batch_size < 1) throw UsageError("batch size must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// Shared plumbing

/// Loads the model and folds its batch-norm layers.
inline Graph load_graph(const ExperimentConfig& cfg) {
  if (cfg.model.empty()) throw UsageError("--model is required");
  return fold_batchnorm(load_model(cfg.model, cfg.weights));
}

inline Tensor load_dataset(const std::filesystem::path& path, const Graph& g) {
  if (path.empty()) throw UsageError("--dataset is required");
  Tensor t = read_tensor(path);
  if (t.rank() != g.input_dims.size() + 1 ||
      !std::equal(g.input_dims.begin(), g.input_dims.end(), t.dims().begin() + 1)) {
    throw ShapeError(path.string() + ": dataset dims " + to_string(t.dims()) + " do not match model input " +
                     to_string(g.input_dims));
  }
  return t;
}

/// `count` distinct sample indices drawn with `seed`, in ascending order.
inline std::vector<std::size_t> profile_indices(std::size_t available, std::size_t count, std::uint64_t seed) {
  if (count > available) {
    throw UsageError("requested " + std::to_string(count) + " profiling samples but the dataset has " +
                     std::to_string(available));
  }
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::optional<KnnModel> load_knn(const std::filesystem::path& path) {
  if (path.empty()) return std::nullopt;
  return knn_from_json(io::parse_json(io::read_text(path), path.string()));
}

inline std::string format_db(double db) {
  if (std::isnan(db)) return "undefined";
  if (std::isinf(db)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", db);
  return buf;
}

inline std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

inline std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() < w ? std::string(w - s.size(), ' ') + s : s;
}

/// Writes `<out>` (text) and `<out>.json` when an output path is configured.
inline void write_report(const std::filesystem::path& out, const std::string& text, const nlohmann::json& j) {
  if (out.empty()) return;
  io::write_text(out, text);
  io::write_text(out.string() + ".json", j.dump(2) + "\n");
}

inline double top1_agreement(const Tensor& a, const Tensor& b) {
  const auto x = argmax_rows(a), y = argmax_rows(b);
  if (x.size() != y.size()) throw ShapeError("agreement: batch sizes differ");
  if (x.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < x.size(); ++i) same += x[i] == y[i];
  return static_cast<double>(same) / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// profile

inline ProfileStats cmd_profile(const ExperimentConfig& cfg) {
  cfg.check();
  const Graph g = load_graph(cfg);
  const Tensor data = load_dataset(cfg.dataset, g);
  const auto idx = profile_indices(data.batch(), cfg.profile_samples, cfg.seed);
  ProfileStats ps = collect_stats(g, data, idx, cfg.batch_size);
  if (!cfg.out.empty()) io::write_text(cfg.out, to_json(ps).dump(1) + "\n");
  return ps;
}

// ---------------------------------------------------------------------------
// quantize

inline DType code_dtype(int bits, bool is_signed) {
  if (bits <= 8) return is_signed ? DType::i8 : DType::u8;
  return DType::i32;
}

/// Solves the plan, then writes it to `out` and the quantized parameters to
/// `<out>.qparams/<node>.{weight,bias}.qtsr`.
inline QuantPlan cmd_quantize(const ExperimentConfig& cfg, const ProfileStats& stats) {
  cfg.check();
  const Graph g = load_graph(cfg);
  const auto knn = load_knn(cfg.knn);
  if (cfg.mode == PlanMode::cw_pdf_aware && !knn) throw UsageError("mode cw_pdf_aware needs --knn");
  QuantPlan plan = solve_plan(g, stats, cfg.mode, cfg.bits, knn ? &*knn : nullptr);
  if (!cfg.out.empty()) {
    io::write_text(cfg.out, to_json(plan).dump(1) + "\n");
    const QuantizedGraph qg = quantize_params(g, plan);
    const std::filesystem::path dir = cfg.out.string() + ".qparams";
    std::filesystem::create_directories(dir);
    for (const auto& [name, layer] : qg.layers) {
      write_code_tensor(dir / (name + ".weight.qtsr"), layer.kernel, code_dtype(cfg.bits, true));
      CodeTensor bias({layer.bias.size()});
      for (std::size_t j = 0; j < layer.bias.size(); ++j) bias[j] = layer.bias[j];
      if (!codes_fit(bias, DType::i32)) throw FormatError("node '" + name + "': bias codes exceed 32 bits");
      write_code_tensor(dir / (name + ".bias.qtsr"), bias, DType::i32);
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// eval

struct EvalReport {
  PlanMode mode = PlanMode::cw_max;
  int bits = 8;
  std::size_t samples = 0;
  std::size_t agree = 0;                 // float and quantized argmax match
  std::optional<std::size_t> float_correct, quant_correct;
  QuantCounters counters;
  std::size_t param_saturations = 0;
  SqnrReport sqnr;

  double agreement() const { return samples ? static_cast<double>(agree) / static_cast<double>(samples) : 1.0; }
};

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  json j;
  j["mode"] = mode_name(r.mode);
  j["bits"] = r.bits;
  j["samples"] = r.samples;
  j["agree"] = r.agree;
  j["agreement"] = r.agreement();
  if (r.float_correct) j["float_correct"] = *r.float_correct;
  if (r.quant_correct) j["quant_correct"] = *r.quant_correct;
  j["accumulator_saturations"] = r.counters.accumulator_saturations;
  j["output_saturations"] = r.counters.output_saturations;
  j["param_saturations"] = r.param_saturations;
  json t = json::object();
  for (const auto& [name, s] : r.sqnr.tensors) {
    json ch = json::array();
    for (std::size_t c = 0; c < s.signal.size(); ++c) ch.push_back(db_to_json(s.channel_db(c)));
    t[name] = {{"pooled_db", db_to_json(s.pooled_db())}, {"channel_db", ch}};
  }
  j["sqnr"] = t;
  return j;
}

inline std::string to_text(const EvalReport& r) {
  std::string s = "mode " + std::string(mode_name(r.mode)) + ", " + std::to_string(r.bits) + "-bit, " +
                  std::to_string(r.samples) + " samples\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "top-1 agreement %zu/%zu (%.2f%%)\n", r.agree, r.samples, 100.0 * r.agreement());
  s += buf;
  if (r.float_correct && r.quant_correct) {
    std::snprintf(buf, sizeof buf, "labeled accuracy: float %zu, quantized %zu\n", *r.float_correct, *r.quant_correct);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "saturations: parameters %zu, accumulator %zu, output %zu\n", r.param_saturations,
                r.counters.accumulator_saturations, r.counters.output_saturations);
  s += buf;
  s += pad_right("tensor", 16) + pad_left("channels", 9) + pad_left("pooled_db", 11) + pad_left("worst_db", 11) + "\n";
  for (const auto& [name, t] : r.sqnr.tensors) {
    double worst = std::numeric_limits<double>::infinity();
    bool undefined = true;
    for (std::size_t c = 0; c < t.signal.size(); ++c) {
      const double db = t.channel_db(c);
      if (std::isnan(db)) continue;
      undefined = false;
      worst = std::min(worst, db);
    }
    if (undefined) worst = std::numeric_limits<double>::quiet_NaN();
    s += pad_right(name, 16) + pad_left(std::to_string(t.signal.size()), 9) + pad_left(format_db(t.pooled_db()), 11) +
         pad_left(format_db(worst), 11) + "\n";
  }
  return s;
}

/// Float and quantized inference over the evaluation set in fixed batches.
/// Integer codes of `cfg.capture` tensors are written to `<out>.trace/<tensor>.qtsr`.
inline EvalReport evaluate(const ExperimentConfig& cfg, const Graph& g, const QuantPlan& plan) {
  cfg.check();
  const Tensor data = load_dataset(cfg.eval_dataset.empty() ? cfg.dataset : cfg.eval_dataset, g);
  std::optional<CodeTensor> labels;
  if (!cfg.labels.empty()) {
    labels = read_code_tensor(cfg.labels);
    if (labels->size() != data.batch()) throw ShapeError(cfg.labels.string() + ": label count does not match dataset");
  }
  for (const auto& name : cfg.capture) plan.tensor(name);

  const QuantizedGraph qg = quantize_params(g, plan);
  EvalReport r;
  r.mode = plan.mode;
  r.bits = plan.bits;
  r.samples = data.batch();
  r.param_saturations = qg.param_saturations;
  if (labels) r.float_correct = r.quant_correct = 0;
  std::map<std::string, std::vector<std::int32_t>> traces;
  std::map<std::string, Shape> trace_dims;

  for (std::size_t begin = 0; begin < data.batch(); begin += cfg.batch_size) {
    const std::size_t end = std::min(data.batch(), begin + cfg.batch_size);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor batch = data.gather_batch(idx);
    const FloatRun fr = execute_float(g, batch, CaptureSet::everything());
    const QuantRun qr = execute_quantized(qg, batch, CaptureSet::everything());
    for (const auto& [name, codes] : qr.captured) r.sqnr.add(name, fr.captured.at(name), codes, plan.tensor(name));
    const auto fa = argmax_rows(fr.output), qa = argmax_rows(qr.output);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      r.agree += fa[i] == qa[i];
      if (labels) {
        *r.float_correct += fa[i] == (*labels)[begin + i];
        *r.quant_correct += qa[i] == (*labels)[begin + i];
      }
    }
    r.counters.accumulator_saturations += qr.counters.accumulator_saturations;
    r.counters.output_saturations += qr.counters.output_saturations;
    for (const auto& name : cfg.capture) {
      const CodeTensor& c = qr.captured.at(name);
      auto& v = traces[name];
      v.insert(v.end(), c.data().begin(), c.data().end());
      trace_dims[name] = c.dims();
    }
  }

  if (!cfg.out.empty() && !cfg.capture.empty()) {
    const std::filesystem::path dir = cfg.out.string() + ".trace";
    std::filesystem::create_directories(dir);
    for (auto& [name, codes] : traces) {
      Shape dims = trace_dims.at(name);
      dims[0] = data.batch();
      const TensorFormat& f = plan.tensor(name);
      write_code_tensor(dir / (name + ".qtsr"), CodeTensor(dims, std::move(codes)), code_dtype(f.bits, f.is_signed));
    }
  }
  return r;
}

inline EvalReport cmd_eval(const ExperimentConfig& cfg, const QuantPlan& plan) {
  const Graph g = load_graph(cfg);
  EvalReport r = evaluate(cfg, g, plan);
  write_report(cfg.out, to_text(r), to_json(r));
  return r;
}

// ---------------------------------------------------------------------------
// compare

struct CompareReport {
  std::vector<EvalReport> modes;  // in kAllModes order
  const EvalReport& at(PlanMode m) const {
    for (const auto& r : modes) {
      if (r.mode == m) return r;
    }
    throw ContractError("compare: mode missing from report");
  }
};

/// Classifier used by cw_pdf_aware when no --knn file is given: trained on a
/// synthetic channel corpus seeded from the config.
inline KnnModel default_knn(std::uint64_t seed, int bits) {
  CorpusSpec cs;
  cs.seed = seed;
  cs.channels = 400;
  cs.bits = bits;
  std::vector<LabeledFeatures> data;
  for (const auto& e : synthetic_channel_corpus(cs)) data.push_back(e.labeled);
  return train_knn(data);
}

inline nlohmann::json to_json(const CompareReport& r) {
  nlohmann::json j;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : r.modes) j["modes"].push_back(to_json(m));
  return j;
}

inline std::string to_text(const CompareReport& r) {
  constexpr std::size_t w = 15;
  std::string s = pad_right("tensor (pooled dB)", 20);
  for (const auto& m : r.modes) s += pad_left(mode_name(m.mode), w);
  s += "\n";
  if (r.modes.empty()) return s;
  for (const auto& [name, t] : r.modes.front().sqnr.tensors) {
    s += pad_right(name, 20);
    for (const auto& m : r.modes) s += pad_left(format_db(m.sqnr.tensors.at(name).pooled_db()), w);
    s += "\n";
  }
  s += pad_right("top-1 agreement", 20);
  for (const auto& m : r.modes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * m.agreement());
    s += pad_left(buf, w);
  }
  s += "\n" + pad_right("saturations", 20);
  for (const auto& m : r.modes) {
    s += pad_left(std::to_string(m.counters.accumulator_saturations + m.counters.output_saturations), w);
  }
  return s + "\n";
}

/// Profiles once, then solves and evaluates every plan mode.
inline CompareReport cmd_compare(const ExperimentConfig& cfg) {
  cfg.check();
  const Graph g = load_graph(cfg);
  const Tensor data = load_dataset(cfg.dataset, g);
  const ProfileStats stats =
      collect_stats(g, data, profile_indices(data.batch(), cfg.profile_samples, cfg.seed), cfg.batch_size);
  auto knn = load_knn(cfg.knn);
  if (!knn) knn = default_knn(cfg.seed, cfg.bits);
  CompareReport r;
  for (PlanMode m : kAllModes) r.modes.push_back(evaluate(cfg, g, solve_plan(g, stats, m, cfg.bits, &*knn)));
  write_report(cfg.out, to_text(r), to_json(r));
  return r;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  std::size_t samples = 0;
  std::size_t draws = 0;
  double match = 0.0;     // mean fraction of channel fls equal to the reference plan
  double variance = 0.0;  // per-channel fl variance across draws, averaged over channels
  std::optional<double> agreement;  // mean top-1 agreement over draws
};

struct SweepReport {
  PlanMode mode = PlanMode::cw_max;
  std::size_t reference_samples = 0;
  std::vector<SweepRow> rows;
};

/// Fls of every channel-wise, statistics-derived tensor, flattened in tensor-name
/// order. FC outputs are skipped: the FC policy gives them one layer-wide fl.
inline std::vector<int> stats_fls(const Graph& g, const QuantPlan& plan) {
  std::vector<int> out;
  for (const auto& [name, t] : plan.tensors) {
    if (!t.from_stats) continue;
    const Node* producer = g.producer(name);
    if (producer && producer->kind == LayerKind::fc) continue;
    out.insert(out.end(), t.fl.begin(), t.fl.end());
  }
  return out;
}

/// For each sample count, profiles `draws` random subsets and compares the
/// resulting fls with the plan from `cfg.profile_samples` samples. Draw d uses
/// seed `cfg.seed + d`, so draw 0 of a size equal to `cfg.profile_samples`
/// reproduces cmd_profile. Agreement is measured only when an eval dataset is set.
inline SweepReport cmd_sweep_profile_size(const ExperimentConfig& cfg, const std::vector<std::size_t>& sizes,
                                          std::size_t draws = 10) {
  cfg.check();
  if (sizes.empty()) throw UsageError("sweep: at least one sample count is required");
  if (draws < 1) throw UsageError("sweep: draws must be at least 1");
  const Graph g = load_graph(cfg);
  const Tensor data = load_dataset(cfg.dataset, g);
  const auto knn_file = load_knn(cfg.knn);
  std::optional<KnnModel> knn = knn_file;
  if (cfg.mode == PlanMode::cw_pdf_aware && !knn) knn = default_knn(cfg.seed, cfg.bits);
  const KnnModel* kp = knn ? &*knn : nullptr;

  auto plan_for = [&](std::size_t n, std::uint64_t seed) {
    const ProfileStats ps = collect_stats(g, data, profile_indices(data.batch(), n, seed), cfg.batch_size);
    return solve_plan(g, ps, cfg.mode, cfg.bits, kp);
  };
  const std::vector<int> ref = stats_fls(g, plan_for(cfg.profile_samples, cfg.seed));

  SweepReport rep;
  rep.mode = cfg.mode;
  rep.reference_samples = cfg.profile_samples;
  for (std::size_t n : sizes) {
    if (n < 1) throw UsageError("sweep: sample counts must be at least 1");
    SweepRow row;
    row.samples = n;
    row.draws = draws;
    std::vector<std::vector<int>> fls;
    double agree = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      const QuantPlan plan = plan_for(n, cfg.seed + d);
      const auto f = stats_fls(g, plan);
      std::size_t same = 0;
      for (std::size_t i = 0; i < f.size(); ++i) same += f[i] == ref[i];
      row.match += static_cast<double>(same) / static_cast<double>(f.size()) / static_cast<double>(draws);
      fls.push_back(f);
      if (!cfg.eval_dataset.empty()) {
        ExperimentConfig ec = cfg;
        ec.capture.clear();
        agree += evaluate(ec, g, plan).agreement();
      }
    }
    for (std::size_t c = 0; c < ref.size(); ++c) {
      double mean = 0.0, ss = 0.0;
      for (const auto& f : fls) mean += f[c];
      mean /= static_cast<double>(draws);
      for (const auto& f : fls) ss += (f[c] - mean) * (f[c] - mean);
      row.variance += ss / static_cast<double>(draws) / static_cast<double>(ref.size());
    }
    if (!cfg.eval_dataset.empty()) row.agreement = agree / static_cast<double>(draws);
    rep.rows.push_back(row);
  }

  nlohmann::json j;
  j["mode"] = mode_name(rep.mode);
  j["reference_samples"] = rep.reference_samples;
  j["rows"] = nlohmann::json::array();
  std::string text = "mode " + std::string(mode_name(rep.mode)) + ", reference " + std::to_string(rep.reference_samples) +
                     " samples\n" + pad_left("samples", 8) + pad_left("draws", 7) + pad_left("fl_match", 10) +
                     pad_left("fl_var", 10) + pad_left("agreement", 11) + "\n";
  for (const auto& row : rep.rows) {
    nlohmann::json jr = {{"samples", row.samples}, {"draws", row.draws}, {"fl_match", row.match}, {"fl_variance", row.variance}};
    if (row.agreement) jr["agreement"] = *row.agreement;
    j["rows"].push_back(jr);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%8zu%7zu%10.4f%10.4f", row.samples, row.draws, row.match, row.variance);
    text += buf;
    if (row.agreement) {
      std::snprintf(buf, sizeof buf, "%10.2f%%", 100.0 * *row.agreement);
      text += buf;
    } else {
      text += pad_left("-", 11);
    }
    text += "\n";
  }
  write_report(cfg.out, text, j);
  return rep;
}

// ---------------------------------------------------------------------------
// gen-synthetic

struct GenerateReport {
  std::map<std::string, double> std_span_log2;  // realized log2(max sd / min sd) per calibrated tensor
};

/// Writes model.json, model.bin, train.qtsr, test.qtsr, train_labels.qtsr and
/// test_labels.qtsr into `dir`. Labels come from the float teacher.
inline GenerateReport cmd_gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir,
                                        std::size_t train_count = 200, std::size_t test_count = 1000) {
  spec.check();
  if (train_count < 1 || test_count < 1) throw UsageError("synthetic: dataset sizes must be at least 1");
  const Graph g = synthetic_classifier(spec);
  std::filesystem::create_directories(dir);
  save_model(g, dir / "model.json", dir / "model.bin");
  const Graph folded = fold_batchnorm(g);
  GenerateReport rep;
  const std::pair<const char*, std::pair<std::size_t, std::uint64_t>> sets[] = {{"train", {train_count, 1}},
                                                                               {"test", {test_count, 2}}};
  for (const auto& [name, cfg] : sets) {
    const Tensor x = synthetic_inputs(spec, cfg.first, cfg.second);
    write_tensor(dir / (std::string(name) + ".qtsr"), x);
    const auto labels = argmax_rows(execute_float(folded, x).output);
    CodeTensor lt({labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) lt[i] = labels[i];
    write_code_tensor(dir / (std::string(name) + "_labels.qtsr"), lt, DType::i32);
  }
  const Tensor calib = synthetic_inputs(spec, spec.calibration_samples, 0);
  const FloatRun fr = execute_float(folded, calib, CaptureSet::everything());
  for (const char* t : {"b1", "d1", "c2", "c3a", "c3b"}) {
    const auto s = detail::summarize_channels(fr.captured.at(t));
    const auto [lo, hi] = std::minmax_element(s.sd.begin(), s.sd.end());
    rep.std_span_log2[t] = std::log2(*hi / *lo);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// train-knn

struct KnnTrainReport {
  std::size_t train = 0, held_out = 0;
  double held_out_accuracy = 0.0;
  KnnModel model;
};

/// Builds the labeled channel corpus, trains on a seeded random half and scores
/// the other half. The model is written to `out` as JSON.
inline KnnTrainReport cmd_train_knn(const CorpusSpec& spec, const std::filesystem::path& out = {}) {
  const auto corpus = synthetic_channel_corpus(spec);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed ^ 0x5bd1e995u);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = corpus.size() / 2;
  std::vector<LabeledFeatures> train;
  for (std::size_t i = 0; i < half; ++i) train.push_back(corpus[order[i]].labeled);
  KnnTrainReport r;
  r.model = train_knn(train);
  r.train = half;
  r.held_out = corpus.size() - half;
  std::size_t hit = 0;
  for (std::size_t i = half; i < corpus.size(); ++i) {
    const auto& e = corpus[order[i]].labeled;
    hit += classify_pdf(e.features, r.model) == e.label;
  }
  r.held_out_accuracy = r.held_out ? static_cast<double>(hit) / static_cast<double>(r.held_out) : 0.0;
  if (!out.empty()) io::write_text(out, to_json(r.model).dump(1) + "\n");
  return r;
}

}  // namespace chanq
