// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "test_util.hpp"

namespace chanq {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;
using testing::slurp;

/// Runs the CLI with `args`; stdout and stderr go to `<dir>/last.log`.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CHANQ_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json load_json(const fs::path& p) { return io::parse_json(slurp(p), p.string()); }

/// Identity graph on [c, h, w] inputs plus a dataset, saved under `dir`.
void write_identity(const fs::path& dir, std::size_t c, std::size_t h, std::size_t w, const Tensor& data) {
  save_model(testing::identity_graph(c, h, w), dir / "model.json", dir / "model.bin");
  write_tensor(dir / "data.qtsr", data);
}

std::string paths(const fs::path& dir, const std::string& data = "data.qtsr") {
  return "--model '" + (dir / "model.json").string() + "' --dataset '" + (dir / data).string() + "'";
}

// ---------------------------------------------------------------------------
// profile

TEST(CliProfile, SingleSampleCounts) {
  const auto dir = scratch_dir("cli_profile");
  std::mt19937_64 rng(1);
  write_identity(dir, 2, 3, 3, testing::random_tensor(rng, {4, 2, 3, 3}));
  ASSERT_EQ(cli("profile " + paths(dir) + " --profile-samples 1 --out '" + (dir / "s.json").string() + "'",
                dir / "log"), 0)
      << slurp(dir / "log");
  const ProfileStats ps = profile_stats_from_json(load_json(dir / "s.json"));
  EXPECT_EQ(ps.samples, 1u);
  for (const char* t : {"input", "out"}) {
    for (const auto& ch : ps.activation(t).channels) EXPECT_EQ(ch.count, 9u);
    EXPECT_EQ(ps.activation(t).pooled.count, 18u);
  }
}

TEST(CliProfile, MissingModelIsAnError) {
  const auto dir = scratch_dir("cli_missing");
  std::mt19937_64 rng(1);
  write_identity(dir, 2, 1, 1, testing::random_tensor(rng, {4, 2, 1, 1}));
  EXPECT_EQ(cli("profile --model '" + (dir / "nope.json").string() + "' --dataset '" + (dir / "data.qtsr").string() + "'",
                dir / "log"), 2);
  EXPECT_EQ(cli("profile --dataset '" + (dir / "data.qtsr").string() + "'", dir / "log"), 1);
}

TEST(CliProfile, SameSeedSameBytes) {
  const auto dir = scratch_dir("cli_seed");
  std::mt19937_64 rng(2);
  write_identity(dir, 3, 4, 4, testing::random_tensor(rng, {20, 3, 4, 4}));
  for (const char* name : {"a.json", "b.json"}) {
    ASSERT_EQ(cli("profile " + paths(dir) + " --profile-samples 5 --seed 3 --out '" + (dir / name).string() + "'",
                  dir / "log"), 0);
  }
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  ASSERT_EQ(cli("profile " + paths(dir) + " --profile-samples 5 --seed 4 --out '" + (dir / "c.json").string() + "'",
                dir / "log"), 0);
  EXPECT_NE(slurp(dir / "a.json"), slurp(dir / "c.json"));
}

// ---------------------------------------------------------------------------
// quantize / eval

// Two-channel 1x1 data whose channel maxima are 1 and 8.
Tensor two_scale_data() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({32, 2, 1, 1});
  for (std::size_t n = 0; n < 32; ++n) {
    t[n * 2] = static_cast<float>(u(rng) * 0.9);
    t[n * 2 + 1] = static_cast<float>(u(rng) * 7.0);
  }
  t[0] = 1.0f;
  t[3] = -8.0f;
  return t;
}

TEST(CliQuantize, LayerwiseAndChannelwisePlans) {
  const auto dir = scratch_dir("cli_quantize");
  write_identity(dir, 2, 1, 1, two_scale_data());
  const std::string common = paths(dir) + " --profile-samples 32";
  ASSERT_EQ(cli("quantize " + common + " --mode layerwise_max --out '" + (dir / "lw.json").string() + "'", dir / "log"), 0)
      << slurp(dir / "log");
  ASSERT_EQ(cli("quantize " + common + " --mode cw_max --out '" + (dir / "cw.json").string() + "'", dir / "log"), 0);
  const QuantPlan lw = plan_from_json(load_json(dir / "lw.json"));
  const QuantPlan cw = plan_from_json(load_json(dir / "cw.json"));
  for (const auto& [name, t] : lw.tensors) EXPECT_TRUE(t.single_fl()) << name;
  EXPECT_EQ(lw.tensor("input").fl, (std::vector<int>{3, 3}));
  EXPECT_EQ(cw.tensor("input").fl, (std::vector<int>{6, 3}));
  // Reloading and re-serializing reproduces the file exactly.
  EXPECT_EQ(to_json(cw).dump(1) + "\n", slurp(dir / "cw.json"));
  EXPECT_TRUE(fs::exists(dir / "cw.json.qparams" / "conv.weight.qtsr"));
  EXPECT_TRUE(fs::exists(dir / "cw.json.qparams" / "conv.bias.qtsr"));
  DType dt{};
  const CodeTensor k = read_code_tensor(dir / "cw.json.qparams" / "conv.weight.qtsr", &dt);
  EXPECT_EQ(dt, DType::i8);
  EXPECT_EQ(k.size(), 4u);
  // cw_pdf_aware needs a classifier file.
  EXPECT_EQ(cli("quantize " + common + " --mode cw_pdf_aware", dir / "log"), 1);
  EXPECT_EQ(cli("quantize " + common + " --mode nonsense", dir / "log"), 1);
}

TEST(CliEval, IdentityAgreesEverywhere) {
  const auto dir = scratch_dir("cli_eval");
  // Distinct values on a 1/16 grid inside the channel ranges, so argmax survives quantization.
  std::mt19937_64 rng(5);
  Tensor data({50, 4, 1, 1});
  for (std::size_t n = 0; n < 50; ++n) {
    std::vector<int> v{-30, -7, 11, 29};
    std::shuffle(v.begin(), v.end(), rng);
    for (std::size_t c = 0; c < 4; ++c) data[n * 4 + c] = static_cast<float>(v[c]) / 16.0f;
  }
  write_identity(dir, 4, 1, 1, data);
  const fs::path out = dir / "eval.txt";
  ASSERT_EQ(cli("eval " + paths(dir) + " --profile-samples 50 --mode cw_max --out '" + out.string() + "'", dir / "log"), 0)
      << slurp(dir / "log");
  const auto j = load_json(out.string() + ".json");
  EXPECT_EQ(j.at("agree").get<std::size_t>(), 50u);
  EXPECT_DOUBLE_EQ(j.at("agreement").get<double>(), 1.0);
  // One SQNR row per evaluated tensor, in the JSON and the text table.
  EXPECT_EQ(j.at("sqnr").size(), 2u);
  EXPECT_EQ(j.at("sqnr").at("out").at("pooled_db"), "inf");
  const std::string text = slurp(out);
  EXPECT_NE(text.find("\ninput "), std::string::npos);
  EXPECT_NE(text.find("\nout "), std::string::npos);
}

TEST(CliEval, FloatAgainstItselfLosesNothing) {
  std::mt19937_64 rng(6);
  const Graph g = testing::identity_graph(3, 2, 2);
  const Tensor x = testing::random_tensor(rng, {40, 3, 2, 2});
  const Tensor y = execute_float(g, x).output;
  EXPECT_EQ(top1_agreement(y, y), 1.0);
  // Labeled accuracy of the float model against its own argmax is perfect.
  const auto dir = scratch_dir("cli_self");
  write_identity(dir, 3, 2, 2, x);
  const auto labels = argmax_rows(y);
  CodeTensor lt({labels.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) lt[i] = labels[i];
  write_code_tensor(dir / "labels.qtsr", lt, DType::i32);
  ExperimentConfig cfg;
  cfg.model = dir / "model.json";
  cfg.dataset = dir / "data.qtsr";
  cfg.labels = dir / "labels.qtsr";
  cfg.profile_samples = 40;
  cfg.mode = PlanMode::cw_max;
  const EvalReport r = cmd_eval(cfg, cmd_quantize(cfg, cmd_profile(cfg)));
  EXPECT_EQ(*r.float_correct, 40u);
  EXPECT_EQ(r.samples, 40u);
}

TEST(CliEval, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch_dir("cli_replay");
  std::mt19937_64 rng(7);
  Graph g;
  g.input_dims = {2, 5, 5};
  g.nodes.push_back(testing::conv_node("c1", "input", "a", testing::random_tensor(rng, {3, 2, 3, 3}),
                                       testing::random_tensor(rng, {3}, -0.1, 0.1)));
  g.nodes.push_back(testing::make_node("relu", LayerKind::relu, {"a"}, "b"));
  g.nodes.push_back(testing::conv_node("fc", "b", "y", testing::random_tensor(rng, {4, 27}),
                                       testing::random_tensor(rng, {4}, -0.1, 0.1), LayerKind::fc));
  save_model(validate(std::move(g)), dir / "model.json", dir / "model.bin");
  write_tensor(dir / "data.qtsr", testing::random_tensor(rng, {30, 2, 5, 5}));
  for (const char* run : {"r1", "r2"}) {
    ASSERT_EQ(cli("eval " + paths(dir) + " --profile-samples 10 --mode cw_laplace --capture a,b,y --out '" +
                      (dir / run).string() + "'", dir / "log"), 0)
        << slurp(dir / "log");
  }
  EXPECT_EQ(slurp(dir / "r1"), slurp(dir / "r2"));
  EXPECT_EQ(slurp(dir / "r1.json"), slurp(dir / "r2.json"));
  for (const char* t : {"a", "b", "y"}) {
    const std::string name = std::string(t) + ".qtsr";
    ASSERT_TRUE(fs::exists(dir / "r1.trace" / name)) << name;
    EXPECT_EQ(slurp(dir / "r1.trace" / name), slurp(dir / "r2.trace" / name)) << name;
  }
  EXPECT_EQ(cli("eval " + paths(dir) + " --profile-samples 10 --mode cw_max --capture nothere", dir / "log"), 2);
}

// ---------------------------------------------------------------------------
// Synthetic network experiments

class SyntheticCli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    for (const char* span : {"4", "0"}) {
      const auto dir = scratch_dir(name(span));
      const int rc = cli("gen-synthetic --out '" + dir.string() + "' --seed 1 --scale-span " + span +
                             " --train-samples 200 --test-samples 200",
                         dir / "gen.log");
      ASSERT_EQ(rc, 0) << slurp(dir / "gen.log");
    }
  }

  static void TearDownTestSuite() {
    for (const char* span : {"4", "0"}) fs::remove_all(dir(span));
  }

  // Per process: ctest runs each test case in its own process, in parallel.
  static std::string name(const char* span) {
    return std::string("cli_syn_") + span + "_" + std::to_string(::getpid());
  }
  static fs::path dir(const char* span) { return fs::temp_directory_path() / ("chanq_test_" + name(span)); }

  static std::string synthetic_args(const char* span) {
    const fs::path d = dir(span);
    return "--model '" + (d / "model.json").string() + "' --dataset '" + (d / "train.qtsr").string() +
           "' --eval-dataset '" + (d / "test.qtsr").string() + "' --labels '" + (d / "test_labels.qtsr").string() + "'";
  }

  static nlohmann::json compare(const char* span, const std::string& name) {
    const fs::path out = dir(span) / name;
    const int rc = cli("compare " + synthetic_args(span) + " --out '" + out.string() + "'", dir(span) / "cmp.log");
    EXPECT_EQ(rc, 0) << slurp(dir(span) / "cmp.log");
    return load_json(out.string() + ".json");
  }
};

double pooled(const nlohmann::json& mode, const std::string& tensor) {
  const auto& v = mode.at("sqnr").at(tensor).at("pooled_db");
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

TEST_F(SyntheticCli, HeterogeneousChannelwiseBeatsLayerwise) {
  const auto j = compare("4", "compare.txt");
  const auto& modes = j.at("modes");
  ASSERT_EQ(modes.size(), 5u);
  ASSERT_EQ(modes[0].at("mode"), "layerwise_max");
  for (std::size_t m = 1; m < modes.size(); ++m) {
    for (const auto& [tensor, _] : modes[0].at("sqnr").items()) {
      EXPECT_GE(pooled(modes[m], tensor), pooled(modes[0], tensor)) << modes[m].at("mode") << " " << tensor;
    }
  }
  // The text twin has one row per tensor plus agreement and saturation rows.
  const std::string text = slurp(dir("4") / "compare.txt");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), modes[0].at("sqnr").size() + 3);
}

TEST_F(SyntheticCli, HomogeneousColumnsWithinOneDb) {
  const auto j = compare("0", "compare.txt");
  const auto& modes = j.at("modes");
  for (std::size_t m = 1; m < modes.size(); ++m) {
    for (const auto& [tensor, _] : modes[0].at("sqnr").items()) {
      EXPECT_NEAR(pooled(modes[m], tensor), pooled(modes[0], tensor), 1.0) << modes[m].at("mode") << " " << tensor;
    }
  }
}

TEST_F(SyntheticCli, CompareIsDeterministicAndMatchesQuantizeEval) {
  compare("0", "again.txt");
  compare("0", "again2.txt");
  EXPECT_EQ(slurp(dir("0") / "again.txt"), slurp(dir("0") / "again2.txt"));
  EXPECT_EQ(slurp(dir("0") / "again.txt.json"), slurp(dir("0") / "again2.txt.json"));

  const fs::path plan = dir("0") / "lw_plan.json", ev = dir("0") / "lw_eval.txt";
  ASSERT_EQ(cli("quantize " + synthetic_args("0") + " --mode layerwise_max --out '" + plan.string() + "'",
                dir("0") / "q.log"), 0);
  ASSERT_EQ(cli("eval " + synthetic_args("0") + " --plan '" + plan.string() + "' --out '" + ev.string() + "'",
                dir("0") / "e.log"), 0);
  const auto cmp = load_json(dir("0") / "again.txt.json");
  EXPECT_EQ(cmp.at("modes")[0], load_json(ev.string() + ".json"));
}

TEST_F(SyntheticCli, SingleSizeSweepDegeneratesToEval) {
  ExperimentConfig cfg;
  cfg.model = dir("4") / "model.json";
  cfg.dataset = dir("4") / "train.qtsr";
  cfg.eval_dataset = dir("4") / "test.qtsr";
  cfg.mode = PlanMode::cw_laplace;
  cfg.profile_samples = 20;
  const SweepReport s = cmd_sweep_profile_size(cfg, {20}, 1);
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows[0].match, 1.0);
  EXPECT_EQ(s.rows[0].variance, 0.0);
  const EvalReport e = cmd_eval(cfg, cmd_quantize(cfg, cmd_profile(cfg)));
  EXPECT_EQ(*s.rows[0].agreement, e.agreement());

  EXPECT_EQ(cli("sweep " + synthetic_args("4") + " --mode cw_max --sizes 2,3 --draws 2 --profile-samples 20",
                dir("4") / "sweep.log"), 0)
      << slurp(dir("4") / "sweep.log");
  EXPECT_EQ(cli("sweep " + synthetic_args("4") + " --sizes 5000", dir("4") / "sweep.log"), 1);
}

TEST_F(SyntheticCli, GenerationIsDeterministic) {
  const auto other = scratch_dir("cli_syn_again");
  ASSERT_EQ(cli("gen-synthetic --out '" + other.string() + "' --seed 1 --scale-span 4 --train-samples 200 --test-samples 200",
                other / "gen.log"), 0);
  for (const char* f : {"model.json", "model.bin", "train.qtsr", "test.qtsr", "train_labels.qtsr", "test_labels.qtsr"}) {
    EXPECT_EQ(slurp(dir("4") / f), slurp(other / f)) << f;
  }
}

TEST(CliGenerate, RealizedSpanAndInvalidSpecs) {
  const auto dir = scratch_dir("cli_gen");
  const GenerateReport r = cmd_gen_synthetic(SyntheticSpec{}, dir, 4, 4);
  ASSERT_EQ(r.std_span_log2.size(), 5u);
  for (const auto& [t, span] : r.std_span_log2) EXPECT_GE(span, 3.5) << t;
  EXPECT_EQ(cli("gen-synthetic --out '" + dir.string() + "' --scale-span -1", dir / "log"), 1);
  EXPECT_EQ(cli("gen-synthetic --out '" + dir.string() + "' --height 7", dir / "log"), 1);
  EXPECT_EQ(cli("gen-synthetic --out '" + dir.string() + "' --classes 1", dir / "log"), 1);
}

// ---------------------------------------------------------------------------
// Exit codes

TEST(CliExitCodes, UsageAndDataErrors) {
  const auto dir = scratch_dir("cli_exit");
  EXPECT_EQ(cli("", dir / "log"), 1);
  EXPECT_EQ(cli("--help", dir / "log"), 0);
  EXPECT_EQ(cli("profile --help", dir / "log"), 0);
  EXPECT_EQ(cli("frobnicate", dir / "log"), 1);
  EXPECT_EQ(cli("profile --profile-samples 0", dir / "log"), 1);
  std::mt19937_64 rng(1);
  write_identity(dir, 2, 1, 1, testing::random_tensor(rng, {4, 2, 1, 1}));
  EXPECT_EQ(cli("profile " + paths(dir) + " --profile-samples 5", dir / "log"), 1);
  EXPECT_EQ(cli("profile " + paths(dir) + " --bitwidth 1", dir / "log"), 1);
  io::write_text(dir / "bad.qtsr", "not a tensor");
  EXPECT_EQ(cli("profile " + paths(dir, "bad.qtsr"), dir / "log"), 2);
  write_tensor(dir / "wrong.qtsr", testing::random_tensor(rng, {4, 3, 1, 1}));
  EXPECT_EQ(cli("profile " + paths(dir, "wrong.qtsr"), dir / "log"), 2);
  EXPECT_EQ(cli("train-knn --channels 0", dir / "log"), 1);
}

TEST(CliTrainKnn, WritesLoadableModel) {
  const auto dir = scratch_dir("cli_knn");
  ASSERT_EQ(cli("train-knn --channels 60 --samples 1000 --seed 2 --out '" + (dir / "knn.json").string() + "'", dir / "log"), 0)
      << slurp(dir / "log");
  const KnnModel m = knn_from_json(load_json(dir / "knn.json"));
  EXPECT_EQ(m.k, 12u);
  EXPECT_EQ(m.points.size(), 30u);
  EXPECT_NE(slurp(dir / "log").find("held-out accuracy"), std::string::npos);
}

}  // namespace
}  // namespace chanq
