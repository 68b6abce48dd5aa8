#include "dsvqa/cli.h"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <optional>

#include "dsvqa/evaluate.h"
#include "dsvqa/grad_suite.h"
#include "dsvqa/synth.h"
#include "dsvqa/tensor_file.h"
#include "dsvqa/train.h"

namespace dsvqa {

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> num_frames;
  std::optional<double> lr;
  std::optional<double> temperature;
  std::optional<std::string> fusion_mode;
  std::optional<std::string> temporal_conv;
  std::vector<std::string> branches;

  void attach(CLI::App* app) {
    app->add_option("--seed", seed, "Run seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch", batch, "Minibatch size (>= 2)");
    app->add_option("--num-frames", num_frames, "Frames per clip window");
    app->add_option("--lr", lr, "AdamW learning rate");
    app->add_option("--temperature", temperature, "Prompt similarity temperature");
    app->add_option("--fusion-mode", fusion_mode, "text_guided | concat | add");
    app->add_option("--temporal-conv", temporal_conv, "tadaconv | c3d | r2plus1d");
    app->add_option("--branches", branches, "Enabled branches, e.g. bvfe,tcm,vbtc")->delimiter(',');
  }

  void apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (batch) c.batch = *batch;
    if (num_frames) c.num_frames = *num_frames;
    if (lr) c.lr = *lr;
    if (temperature) c.temperature = *temperature;
    if (fusion_mode) c.fusion_mode = *fusion_mode;
    if (temporal_conv) c.temporal_conv = *temporal_conv;
    if (!branches.empty()) c.branches = branches;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string metric_line(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s/%s n=%zu SROCC=%.4f PLCC=%.4f", r.dataset.c_str(),
                r.split.c_str(), r.n, r.srocc, r.plcc);
  return buf;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-stream no-reference video quality engine"};
  app.name(args.empty() ? "dsvqa" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--n", synth.n_videos, "Number of videos")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "Embedding width D")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "MOS noise standard deviation")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Sample seed")->capture_default_str();
  synth_cmd->add_option("--direction-seed", synth.direction_seed, "Planted direction seed")
      ->capture_default_str();
  synth_cmd->add_option("--num-frames", synth.num_frames, "Frames per video")->capture_default_str();
  synth_cmd->add_option("--dataset", synth.dataset, "Dataset label")->capture_default_str();

  // train
  std::string config_path, manifest_path, out_dir;
  Overrides overrides;
  auto* train_cmd = app.add_subcommand("train", "Train on the train split of a manifest");
  train_cmd->add_option("--config", config_path, "RunConfig JSON");
  train_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  train_cmd->add_option("--out", out_dir, "Checkpoint directory")->required();
  overrides.attach(train_cmd);

  // eval
  std::string checkpoint, split = "test", report_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  eval_cmd->add_option("--split", split, "train | val | test | all")->capture_default_str();
  eval_cmd->add_option("--out", report_out, "Report path (default: stdout)");

  // cross-eval
  std::string train_manifest;
  std::vector<std::string> test_manifests;
  auto* cross_cmd = app.add_subcommand("cross-eval", "Evaluate on other datasets without retraining");
  cross_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  cross_cmd->add_option("--train-manifest", train_manifest, "Manifest used for training")->required();
  cross_cmd->add_option("--test", test_manifests, "Test manifest (repeatable)")->required();
  cross_cmd->add_option("--out-dir", out_dir, "Directory for one report per test set");

  // score
  std::string video_id;
  auto* score_cmd = app.add_subcommand("score", "Score one video of a manifest");
  score_cmd->add_option("video-id", video_id, "Video id")->required();
  score_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  score_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();

  // grad-check
  GradSuiteOptions suite;
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare analytic and numeric gradients (f64)");
  grad_cmd->add_option("--max-entries", suite.check.max_entries,
                       "Entries probed per parameter tensor (0 = all)")
      ->capture_default_str();
  grad_cmd->add_option("--seed", suite.seed, "Seed for inputs and sampled entries");
  grad_cmd->add_option("--tolerance", suite.check.tolerance, "Relative error bound")
      ->capture_default_str();

  // plot
  std::string plot_report, plot_prefix;
  auto* plot_cmd = app.add_subcommand("plot", "Write CSV scores and an SVG scatter with the logistic fit");
  plot_cmd->add_option("--report", plot_report, "Existing evaluation report");
  plot_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (when no report is given)");
  plot_cmd->add_option("--manifest", manifest_path, "Manifest (when no report is given)");
  plot_cmd->add_option("--split", split, "Split (when no report is given)")->capture_default_str();
  plot_cmd->add_option("--out", plot_prefix, "Output prefix: <out>.csv and <out>.svg")->required();

  std::vector<std::string> rest(args.rbegin(), args.rend());
  if (!rest.empty()) rest.pop_back();  // program name
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n"
        << "Run with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (*synth_cmd) {
      const auto m = synth_dataset(synth, synth_out);
      out << "wrote " << m.entries.size() << " videos to " << (fs::path(synth_out) / "manifest.json").string()
          << "\n";
    } else if (*train_cmd) {
      RunConfig run = config_path.empty() ? RunConfig{} : load_config(config_path);
      overrides.apply(run);
      run.validate();
      const auto manifest = load_manifest(manifest_path);
      const auto result = train(run, manifest, out_dir, &err);
      out << "checkpoint " << out_dir << " initial_loss " << result.initial_loss << " final_loss "
          << result.final_loss << "\n";
    } else if (*eval_cmd) {
      const auto report = evaluate(checkpoint, manifest_path, split);
      if (report_out.empty()) {
        out << report_dump(report);
      } else {
        write_text(report_out, report_dump(report));
        out << metric_line(report) << "\n";
      }
    } else if (*cross_cmd) {
      std::vector<fs::path> tests(test_manifests.begin(), test_manifests.end());
      const auto reports = cross_dataset_eval(checkpoint, train_manifest, tests);
      for (std::size_t i = 0; i < reports.size(); ++i) {
        out << metric_line(reports[i]) << " fingerprint=" << reports[i].fingerprint << "\n";
        if (!out_dir.empty()) {
          write_text(fs::path(out_dir) / ("report_" + std::to_string(i) + ".json"),
                     report_dump(reports[i]));
        }
      }
    } else if (*score_cmd) {
      auto loaded = load_checkpoint(checkpoint);
      auto manifest = load_manifest(manifest_path);
      std::erase_if(manifest.entries, [&](const auto& e) { return e.video_id != video_id; });
      if (manifest.entries.empty()) throw DataError("no video \"" + video_id + "\" in manifest");
      const auto data = load_dataset(manifest, "all", loaded.run);
      const auto scores = predict(*loaded.model, data, loaded.run);
      const auto& s = scores.front();
      out << nlohmann::json{{"video_id", s.video_id}, {"q_pre", s.q_pre}, {"q_gt", s.q_gt},
                            {"s_pos", s.s_pos},       {"s_neg", s.s_neg}}
                 .dump()
          << "\n";
    } else if (*grad_cmd) {
      const auto checks = run_grad_suite(suite);
      bool ok = true;
      double seconds = 0;
      char buf[200];
      for (const auto& c : checks) {
        std::size_t checked = 0, skipped = 0;
        for (const auto& p : c.report.params) {
          checked += p.checked;
          skipped += p.skipped;
        }
        const bool pass = c.report.passed();
        ok = ok && pass;
        seconds += c.seconds;
        std::snprintf(buf, sizeof buf,
                      "%-22s max_rel_error=%.3e tensors=%zu checked=%zu skipped=%zu %.1fs %s\n",
                      c.module.c_str(), c.report.max_rel_error(), c.report.params.size(), checked,
                      skipped, c.seconds, pass ? "PASS" : "FAIL");
        out << buf;
      }
      std::snprintf(buf, sizeof buf, "grad-check %s in %.1fs (tolerance %.0e)\n",
                    ok ? "passed" : "FAILED", seconds, suite.check.tolerance);
      out << buf;
      return ok ? kExitOk : kExitData;
    } else if (*plot_cmd) {
      EvalReport report;
      if (!plot_report.empty()) {
        std::ifstream in(plot_report);
        if (!in) throw DataError("cannot open " + plot_report);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw DataError("report is not valid JSON: " + std::string(e.what()));
        }
        report = report_from_json(j);
      } else if (!checkpoint.empty() && !manifest_path.empty()) {
        report = evaluate(checkpoint, manifest_path, split);
      } else {
        err << "error: plot needs --report or both --checkpoint and --manifest\n";
        return kExitUsage;
      }
      const fs::path prefix(plot_prefix);
      if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
      write_scores_csv(report, prefix.string() + ".csv");
      write_scatter_svg(report, prefix.string() + ".svg");
      out << "wrote " << prefix.string() << ".csv and " << prefix.string() << ".svg\n";
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace dsvqa
