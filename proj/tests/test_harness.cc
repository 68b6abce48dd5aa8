#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <sstream>

#include "dsvqa/cli.h"
#include "dsvqa/evaluate.h"
#include "dsvqa/optim.h"
#include "dsvqa/synth.h"
#include "dsvqa/tensor_file.h"
#include "dsvqa/train.h"
#include "oracles.h"
#include "test_util.h"

using namespace dsvqa;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth(std::uint64_t seed = 1) {
  SynthConfig s;
  s.n_videos = 40;
  s.dim = 16;
  s.num_frames = 8;
  s.seed = seed;
  return s;
}

RunConfig small_run() {
  RunConfig r;
  r.num_frames = 4;
  r.epochs = 2;
  r.batch = 8;
  r.fragment_grid = 4;
  r.fragment_size = 4;
  return r;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "dsvqa");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(Sampling, FrameWindowsFollowSplitMix64) {
  for (std::uint64_t seed : {0ULL, 1ULL, 77ULL}) {
    const auto idx = sample_frames(20, 6, seed);
    SplitMix64 r(seed);
    const std::size_t start = r.next() % 15;
    ASSERT_EQ(idx.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(idx[i], start + i);
  }
  EXPECT_EQ(sample_frames(3, 5, 9), (std::vector<std::size_t>{0, 1, 2, 2, 2}));
  EXPECT_EQ(centered_frames(10, 4), (std::vector<std::size_t>{3, 4, 5, 6}));
  EXPECT_EQ(centered_frames(2, 3), (std::vector<std::size_t>{0, 1, 1}));
}

TEST(Sampling, SplitProportionsAndDeterminism) {
  for (std::size_t n : {10u, 200u, 37u}) {
    const auto s = assign_splits(n, 5);
    EXPECT_EQ(s, assign_splits(n, 5));
    const auto count = [&](const char* name) { return std::count(s.begin(), s.end(), name); };
    EXPECT_EQ(count("train"), std::llround(0.7 * n));
    EXPECT_EQ(count("val"), std::llround(0.1 * n));
    EXPECT_EQ(count("train") + count("val") + count("test"), static_cast<long>(n));
  }
  EXPECT_NE(assign_splits(200, 5), assign_splits(200, 6));
}

TEST(Synth, CorpusValidatesAndIsLabelled) {
  testutil::TempDir dir("synth");
  const auto m = synth_dataset(small_synth(), dir.path());
  const auto report = validate_manifest(load_manifest(dir / "manifest.json"));
  EXPECT_TRUE(report.ok()) << report.summary();
  ASSERT_EQ(m.entries.size(), 40u);
  EXPECT_EQ(m.entries[3].video_id, "synthetic_0003");
  std::set<std::string> splits;
  for (const auto& e : m.entries) splits.insert(e.split);
  EXPECT_EQ(splits, (std::set<std::string>{"test", "train", "val"}));
}

TEST(Synth, NoiselessMosIsAnExactLogitLinearFunction) {
  testutil::TempDir dir("synth_exact");
  auto cfg = small_synth();
  cfg.noise = 0.0;
  cfg.n_videos = 60;
  const auto m = synth_dataset(cfg, dir.path());
  Eigen::MatrixXd x(60, cfg.dim);
  Eigen::VectorXd y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    const auto f = read_tensor_as<double>(m.resolve(m.entries[i].frames_path));
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      long double s = 0;
      for (std::size_t t = 0; t < cfg.num_frames; ++t) s += f[t * cfg.dim + j];
      x(i, j) = static_cast<double>(s / cfg.num_frames);
    }
    const double q = m.entries[i].mos;
    ASSERT_GT(q, 0.0);
    ASSERT_LT(q, 1.0);
    y(i) = std::log(q / (1 - q));
  }
  const Eigen::VectorXd w = x.colPivHouseholderQr().solve(y);
  EXPECT_LT((x * w - y).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(w.norm(), 1.0, 1e-6);  // the planted direction is a unit vector
}

TEST(Synth, SiblingCorporaShareTheDistributionNotTheSamples) {
  testutil::TempDir a("synth_a"), b("synth_b");
  auto ca = small_synth(1), cb = small_synth(2);
  ca.n_videos = cb.n_videos = 200;
  const auto ma = synth_dataset(ca, a.path());
  const auto mb = synth_dataset(cb, b.path());
  std::vector<double> qa, qb;
  for (const auto& e : ma.entries) qa.push_back(e.mos);
  for (const auto& e : mb.entries) qb.push_back(e.mos);
  const std::set<double> sa(qa.begin(), qa.end());
  // Values clamped to the scale ends can coincide; interior values must not.
  for (double q : qb) {
    if (q > 0.0 && q < 1.0) {
      EXPECT_EQ(sa.count(q), 0u) << q;
    }
  }
  // Two-sample KS at the 5% level: 1.36 * sqrt((n + m) / (n m)).
  EXPECT_LT(ks_statistic(qa, qb), 1.36 * std::sqrt(400.0 / 40000.0));
  EXPECT_EQ(testutil::read_file(a / "text/pos.dvlt"), testutil::read_file(b / "text/pos.dvlt"));
}

TEST(Config, JsonRoundTripAndErrors) {
  RunConfig c;
  c.seed = 9;
  c.branches = {"vbtc", "bvfe"};
  c.fusion_mode = "add";
  c.prompts.pos = "sharp";
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(config_from_json(nlohmann::json::object()).epochs, 50u);

  auto bad = j;
  bad["learning_rate"] = 0.1;
  EXPECT_THROW(config_from_json(bad), ConfigError);
  bad = j;
  bad["epochs"] = "ten";
  EXPECT_THROW(config_from_json(bad), ConfigError);

  auto check = [](auto mutate) {
    RunConfig r;
    mutate(r);
    EXPECT_THROW(r.validate(), ConfigError);
  };
  check([](RunConfig& r) { r.batch = 1; });
  check([](RunConfig& r) { r.alpha = 1.5; });
  check([](RunConfig& r) { r.fusion_mode = "attention"; });
  check([](RunConfig& r) { r.temporal_conv = "lstm"; });
  check([](RunConfig& r) { r.branches = {}; });
  check([](RunConfig& r) { r.branches = {"audio"}; });
  check([](RunConfig& r) { r.lr = -1; });
  check([](RunConfig& r) { r.num_frames = 0; });
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Optim, SingleAdamWStepMatchesHandComputation) {
  Parameter<double> p(Tensor<double>({2}, {1.0, -2.0}));
  Parameter<double> frozen(Tensor<double>({1}, {5.0}), false);
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  AdamW<double> opt({&p, &frozen}, o);
  EXPECT_EQ(opt.size(), 1u);
  backward(sum_all(mul(p.var(), Var<double>::constant(Tensor<double>({2}, {3.0, -0.5})))));
  opt.step();
  // After decay p = p (1 - lr wd); the bias-corrected first step moves each
  // entry by lr * g / (|g| + eps).
  const double g[2] = {3.0, -0.5}, p0[2] = {1.0, -2.0};
  for (int i = 0; i < 2; ++i) {
    const double expect = p0[i] * (1 - 0.1 * 0.5) - 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(p.value()[i], expect, 1e-12);
  }
  EXPECT_EQ(frozen.value()[0], 5.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Optim, MinibatchesAbsorbSingletons) {
  const std::vector<std::size_t> order = {4, 2, 0, 1, 3};
  const auto two = make_minibatches(order, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1], (std::vector<std::size_t>{0, 1, 3}));
  const auto exact = make_minibatches({0, 1, 2, 3}, 2);
  EXPECT_EQ(exact.size(), 2u);
  EXPECT_EQ(make_minibatches({7}, 4).size(), 1u);
}

class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("trained");
    synth_dataset(small_synth(1), *dir_ / "a");
    synth_dataset(small_synth(2), *dir_ / "b");
    run_ = small_run();
    result_ = train(run_, load_manifest(*dir_ / "a/manifest.json"), *dir_ / "ckpt");
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path path(const std::string& rel) { return *dir_ / rel; }

  static testutil::TempDir* dir_;
  static RunConfig run_;
  static TrainResult result_;
};

testutil::TempDir* Trained::dir_ = nullptr;
RunConfig Trained::run_;
TrainResult Trained::result_;

TEST_F(Trained, LossDecreasesAndLogIsWritten) {
  EXPECT_LT(result_.final_loss, result_.initial_loss);
  ASSERT_EQ(result_.epochs.size(), 2u);
  EXPECT_GT(result_.trainable_parameters, 0u);
  EXPECT_EQ(result_.trainable_parameters, result_.parameters);
  const auto log = nlohmann::json::parse(testutil::read_file(path("ckpt/train_log.json")));
  EXPECT_EQ(log["epochs"].size(), 2u);
}

TEST_F(Trained, ReloadedCheckpointReproducesTrainMetricsExactly) {
  const auto report = evaluate(path("ckpt"), path("a/manifest.json"), "train");
  EXPECT_EQ(report.n, result_.train_videos);
  EXPECT_EQ(report.srocc, result_.train_srocc);
  EXPECT_EQ(report.plcc, result_.train_plcc);
}

TEST_F(Trained, ReportMetricsMatchOracles) {
  const auto report = evaluate(path("ckpt"), path("a/manifest.json"), "test");
  std::vector<double> q, g;
  for (const auto& v : report.videos) {
    q.push_back(v.q_pre);
    g.push_back(v.q_gt);
    EXPECT_GT(v.q_pre, 0.0);
    EXPECT_LT(v.q_pre, 1.0);
  }
  EXPECT_NEAR(report.plcc, static_cast<double>(oracle::pearson(q, g)), 1e-10);
  EXPECT_NEAR(report.srocc, oracle::spearman(q, g), 1e-10);
  EXPECT_EQ(report.n, q.size());
  EXPECT_TRUE(report.logistic.has_value() || !report.logistic_error.empty());
}

TEST_F(Trained, ReportRoundTripsThroughJson) {
  const auto report = evaluate(path("ckpt"), path("a/manifest.json"), "all");
  const auto back = report_from_json(nlohmann::json::parse(report_dump(report)));
  EXPECT_EQ(report_dump(back), report_dump(report));
  EXPECT_EQ(back.videos.size(), 40u);
}

TEST_F(Trained, CrossDatasetMatchesDirectEvaluation) {
  const auto reports = cross_dataset_eval(path("ckpt"), path("a/manifest.json"), {path("b/manifest.json")});
  ASSERT_EQ(reports.size(), 1u);
  const auto direct = evaluate(path("ckpt"), path("b/manifest.json"), "all");
  EXPECT_EQ(reports[0].srocc, direct.srocc);
  EXPECT_EQ(reports[0].plcc, direct.plcc);
  EXPECT_EQ(reports[0].n, 40u);
  const auto own = evaluate(path("ckpt"), path("a/manifest.json"), "all");
  EXPECT_NE(own.fingerprint, direct.fingerprint);
  EXPECT_NE(evaluate(path("ckpt"), path("a/manifest.json"), "test").fingerprint, own.fingerprint);
}

TEST_F(Trained, CheckpointReloadIsExact) {
  auto loaded = load_checkpoint(path("ckpt"));
  EXPECT_EQ(config_to_json(loaded.run), config_to_json(run_));
  EXPECT_EQ(loaded.dims.dim, 16u);
  fs::copy(path("ckpt"), path("broken"), fs::copy_options::recursive);
  fs::remove(fs::directory_iterator(path("broken/tensors"))->path());
  EXPECT_THROW(load_checkpoint(path("broken")), FormatError);
}

TEST_F(Trained, CliScorePlotAndErrors) {
  std::string out, err;
  EXPECT_EQ(cli({"--help"}, &out), kExitOk);
  EXPECT_NE(out.find("cross-eval"), std::string::npos);
  EXPECT_EQ(cli({"train", "--bogus"}, &out, &err), kExitUsage);
  EXPECT_EQ(cli({}, &out, &err), kExitUsage);
  EXPECT_EQ(cli({"eval", "--checkpoint", path("ckpt").string(), "--manifest", "/nonexistent.json"}, &out, &err),
            kExitData);
  EXPECT_EQ(cli({"train", "--manifest", path("a/manifest.json").string(), "--out", path("x").string(),
                 "--batch", "1"},
                &out, &err),
            kExitUsage);

  ASSERT_EQ(cli({"score", "synthetic_0005", "--checkpoint", path("ckpt").string(), "--manifest",
                 path("a/manifest.json").string()},
                &out, &err),
            kExitOk)
      << err;
  const auto j = nlohmann::json::parse(out);
  EXPECT_EQ(j["video_id"], "synthetic_0005");
  EXPECT_EQ(cli({"score", "missing", "--checkpoint", path("ckpt").string(), "--manifest",
                 path("a/manifest.json").string()},
                &out, &err),
            kExitData);

  ASSERT_EQ(cli({"eval", "--checkpoint", path("ckpt").string(), "--manifest", path("a/manifest.json").string(),
                 "--out", path("report.json").string()},
                &out, &err),
            kExitOk)
      << err;
  ASSERT_EQ(cli({"plot", "--report", path("report.json").string(), "--out", path("plots/test").string()}, &out,
                &err),
            kExitOk)
      << err;
  const auto csv = testutil::read_file(path("plots/test.csv"));
  EXPECT_EQ(csv.rfind("video_id,q_pre,q_gt\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8);  // header + test split
  EXPECT_NE(testutil::read_file(path("plots/test.svg")).find("<svg"), std::string::npos);
}

TEST(Training, FrozenModelIsANegativeControl) {
  testutil::TempDir dir("frozen");
  synth_dataset(small_synth(), dir / "a");
  auto run = small_run();
  run.trainable = false;
  run.shuffle = false;
  const auto r = train(run, load_manifest(dir / "a/manifest.json"), dir / "ckpt");
  EXPECT_EQ(r.trainable_parameters, 0u);
  EXPECT_EQ(r.initial_loss, r.final_loss);
  ASSERT_EQ(r.epochs.size(), 2u);
  // Every stored parameter equals a fresh initialization with the same seed.
  auto loaded = load_checkpoint(dir / "ckpt");
  auto fresh = build_model(run, loaded.dims);
  auto a = loaded.model->state();
  auto b = fresh->state();
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].second->value(), b.params[i].second->value()) << a.params[i].first;
  }
}

TEST(Training, DisabledBranchesDropTheirParameters) {
  DataDims dims{16, 16};
  RunConfig full = small_run();
  RunConfig only = small_run();
  only.branches = {"vbtc"};
  auto a = build_model(full, dims);
  auto b = build_model(only, dims);
  std::size_t na = 0, nb = 0;
  for (auto& [name, p] : a->state().params) na += p->value().numel();
  for (auto& [name, p] : b->state().params) {
    nb += p->value().numel();
    EXPECT_TRUE(name.rfind("tcm", 0) != 0 && name.rfind("bvfe", 0) != 0) << name;
  }
  EXPECT_LT(nb, na);
}

TEST(Training, MissingClipWithTemporalBranchIsADataError) {
  testutil::TempDir dir("noclip");
  auto m = synth_dataset(small_synth(), dir.path());
  for (auto& e : m.entries) e.clip_path.clear();
  EXPECT_THROW(load_dataset(m, "train", small_run()), DataError);
  auto run = small_run();
  run.branches = {"bvfe", "vbtc"};
  EXPECT_NO_THROW(load_dataset(m, "train", run));
}

TEST(Evaluation, PerfectPredictionsScoreOne) {
  std::vector<VideoScore> s;
  for (int i = 0; i < 12; ++i) s.push_back({"v" + std::to_string(i), 0.05 * i + 0.1, 0.05 * i + 0.1, 0, 0});
  const auto r = summarize("d", "test", s);
  EXPECT_NEAR(r.srocc, 1.0, 1e-15);
  EXPECT_NEAR(r.plcc, 1.0, 1e-15);
  EXPECT_THROW(summarize("d", "test", {s[0]}), DataError);
}
