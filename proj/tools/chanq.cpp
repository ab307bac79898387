// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver. Exit codes: 0 success, 1 usage error, 2 data or format
// error, 3 internal invariant violation.

#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "chanq/chanq.hpp"

namespace {

using namespace chanq;

struct Args {
  ExperimentConfig cfg;
  std::string mode = "cw_pdf_aware";
  std::vector<std::size_t> sizes{2, 100};
  std::size_t draws = 10;
  SyntheticSpec synth;
  std::size_t train_count = 200, test_count = 1000;
  CorpusSpec corpus;
};

void add_common(CLI::App* app, Args& a) {
  app->add_option("--model", a.cfg.model, "model manifest (JSON)");
  app->add_option("--weights", a.cfg.weights, "weights blob (defaults to the manifest's entry)");
  app->add_option("--dataset", a.cfg.dataset, "profiling dataset (f32 QTSR)");
  app->add_option("--eval-dataset", a.cfg.eval_dataset, "evaluation dataset (defaults to --dataset)");
  app->add_option("--labels", a.cfg.labels, "ground-truth labels for the evaluation set (i32 QTSR)");
  app->add_option("--mode", a.mode, "layerwise_max | cw_max | cw_laplace | cw_scauchy | cw_pdf_aware");
  app->add_option("--profile-samples", a.cfg.profile_samples, "profiling sample count")->check(CLI::PositiveNumber);
  app->add_option("--seed", a.cfg.seed, "random seed");
  app->add_option("--out", a.cfg.out, "output path");
  app->add_option("--capture", a.cfg.capture, "tensors whose integer codes are traced")->delimiter(',');
  app->add_option("--bitwidth", a.cfg.bits, "fixed-point bit width");
  app->add_option("--knn", a.cfg.knn, "best-fit-PDF classifier (JSON)");
  app->add_option("--batch", a.cfg.batch_size, "inference batch size")->check(CLI::PositiveNumber);
}

ProfileStats stats_for(const ExperimentConfig& cfg) {
  if (!cfg.stats.empty()) return profile_stats_from_json(io::parse_json(io::read_text(cfg.stats), cfg.stats.string()));
  ExperimentConfig c = cfg;
  c.out.clear();
  return cmd_profile(c);
}

int run(int argc, char** argv) {
  CLI::App app{"chanq: channel-wise fixed-point quantization experiments"};
  app.require_subcommand(1);
  Args a;

  auto* profile = app.add_subcommand("profile", "collect per-channel statistics");
  add_common(profile, a);
  auto* quantize = app.add_subcommand("quantize", "solve a quantization plan and quantize parameters");
  add_common(quantize, a);
  quantize->add_option("--stats", a.cfg.stats, "stats file (profiles the dataset when absent)");
  auto* eval = app.add_subcommand("eval", "evaluate a plan against float inference");
  add_common(eval, a);
  eval->add_option("--plan", a.cfg.plan, "plan file (solved from --stats or a fresh profile when absent)");
  eval->add_option("--stats", a.cfg.stats, "stats file");
  auto* compare = app.add_subcommand("compare", "evaluate all five plan modes side by side");
  add_common(compare, a);
  auto* sweep = app.add_subcommand("sweep", "fl stability versus profiling sample count");
  add_common(sweep, a);
  sweep->add_option("--sizes", a.sizes, "profiling sample counts")->delimiter(',');
  sweep->add_option("--draws", a.draws, "random draws per sample count")->check(CLI::PositiveNumber);
  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic classifier and its datasets");
  gen->add_option("--out", a.cfg.out, "output directory")->required();
  gen->add_option("--seed", a.synth.seed, "random seed");
  gen->add_option("--scale-span", a.synth.scale_span_log2, "log2 of the channel scale ratio");
  gen->add_option("--height", a.synth.height, "input height");
  gen->add_option("--width", a.synth.width, "input width");
  gen->add_option("--classes", a.synth.classes, "class count");
  gen->add_option("--train-samples", a.train_count, "training set size");
  gen->add_option("--test-samples", a.test_count, "test set size");
  auto* knn = app.add_subcommand("train-knn", "train the best-fit-PDF classifier on a synthetic channel corpus");
  knn->add_option("--out", a.cfg.out, "classifier output (JSON)");
  knn->add_option("--seed", a.corpus.seed, "random seed");
  knn->add_option("--channels", a.corpus.channels, "corpus size")->check(CLI::PositiveNumber);
  knn->add_option("--samples", a.corpus.samples_per_channel, "samples per channel");
  knn->add_option("--bitwidth", a.corpus.bits, "fixed-point bit width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const auto mode = parse_mode(a.mode);
  if (!mode) throw UsageError("unknown mode '" + a.mode + "'");
  a.cfg.mode = *mode;
  ExperimentConfig& cfg = a.cfg;

  if (*profile) {
    const ProfileStats ps = cmd_profile(cfg);
    if (cfg.out.empty()) std::cout << to_json(ps).dump(1) << "\n";
  } else if (*quantize) {
    const ProfileStats ps = stats_for(cfg);
    const QuantPlan plan = cmd_quantize(cfg, ps);
    if (cfg.out.empty()) std::cout << to_json(plan).dump(1) << "\n";
  } else if (*eval) {
    QuantPlan plan;
    if (!cfg.plan.empty()) {
      plan = plan_from_json(io::parse_json(io::read_text(cfg.plan), cfg.plan.string()));
    } else {
      ExperimentConfig c = cfg;
      c.out.clear();
      plan = cmd_quantize(c, stats_for(cfg));
    }
    std::cout << to_text(cmd_eval(cfg, plan));
  } else if (*compare) {
    std::cout << to_text(cmd_compare(cfg));
  } else if (*sweep) {
    const SweepReport r = cmd_sweep_profile_size(cfg, a.sizes, a.draws);
    for (const auto& row : r.rows) {
      std::printf("samples %zu: fl match %.4f, fl variance %.4f\n", row.samples, row.match, row.variance);
    }
  } else if (*gen) {
    const GenerateReport r = cmd_gen_synthetic(a.synth, cfg.out, a.train_count, a.test_count);
    for (const auto& [t, span] : r.std_span_log2) std::printf("%s: channel std span 2^%.2f\n", t.c_str(), span);
  } else if (*knn) {
    const KnnTrainReport r = cmd_train_knn(a.corpus, cfg.out);
    std::printf("trained on %zu channels, held-out accuracy %.2f%% over %zu\n", r.train, 100.0 * r.held_out_accuracy,
                r.held_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const chanq::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const chanq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
