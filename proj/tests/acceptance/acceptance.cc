// End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero
// exit status when any criterion fails.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>

#include "contracts.h"
#include "dsvqa/evaluate.h"
#include "dsvqa/grad_suite.h"
#include "dsvqa/synth.h"
#include "dsvqa/train.h"

using namespace dsvqa;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

template <typename F>
void guarded(const std::string& name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (count_b != files.size()) {
    why = "file counts differ";
    return false;
  }
  for (const auto& rel : files) {
    if (testutil::read_file(a / rel) != testutil::read_file(b / rel)) {
      why = rel.string() + " differs";
      return false;
    }
  }
  why = std::to_string(files.size()) + " files byte-identical";
  return true;
}

}  // namespace

int main() {
  testutil::TempDir work("acceptance");
  std::cout.setf(std::ios::fixed);
  std::cout.precision(4);

  guarded("gradient-oracle", [] {
    const auto t0 = Clock::now();
    const auto checks = run_grad_suite();
    const double seconds = since(t0);
    bool ok = seconds < 120.0;
    double worst = 0;
    std::string worst_module;
    std::size_t tensors = 0;
    for (const auto& c : checks) {
      ok = ok && c.report.passed();
      tensors += c.report.params.size();
      if (c.report.max_rel_error() >= worst) {
        worst = c.report.max_rel_error();
        worst_module = c.module;
      }
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu modules, %zu tensors, max rel error %.3e (%s) < 1e-4, %.1f s < 120 s",
                  checks.size(), tensors, worst, worst_module.c_str(), seconds);
    report("gradient-oracle", ok && worst < 1e-4, buf);
  });

  guarded("tadaconv-identity", [] {
    const auto r = contracts::tada_identity(50, 2024);
    report("tadaconv-identity", r.ok, r.detail);
  });

  guarded("metric-oracles", [] {
    const auto r = contracts::metric_oracles(200, 2025);
    report("metric-oracles", r.ok, r.detail);
  });

  guarded("scoring-contracts", [] {
    const auto r = contracts::scoring_contracts(2026);
    report("scoring-contracts", r.ok, r.detail);
  });

  guarded("fusion-contracts", [] {
    const auto r = contracts::fusion_contracts(2027);
    report("fusion-contracts", r.ok, r.detail);
  });

  // Corpus A: n = 200, D = 32, noise 0.02, default everything else.
  SynthConfig synth;
  const fs::path corpus_a = work / "A";
  bool trained = false;
  guarded("synthetic-training", [&] {
    synth_dataset(synth, corpus_a);
    const auto manifest = load_manifest(corpus_a / "manifest.json");
    const RunConfig run;  // default config
    const double cpu0 = cpu_seconds();
    const auto result = train(run, manifest, work / "ckpt_text_guided");
    const double cpu = cpu_seconds() - cpu0;
    trained = true;
    const auto test = evaluate(work / "ckpt_text_guided", corpus_a / "manifest.json", "test");

    RunConfig add = run;
    add.fusion_mode = "add";
    train(add, manifest, work / "ckpt_add");
    const auto test_add = evaluate(work / "ckpt_add", corpus_a / "manifest.json", "test");

    const bool ok = result.train_plcc >= 0.95 && test.srocc >= 0.85 && result.epochs.size() <= 50 &&
                    cpu < 300.0 && test_add.srocc - test.srocc <= 0.02;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "train PLCC %.4f >= 0.95, test SROCC %.4f >= 0.85 (n=%zu), %zu epochs, %.1f s CPU < 300 s; "
                  "add ablation test SROCC %.4f (advantage %+.4f <= 0.02)",
                  result.train_plcc, test.srocc, test.n, result.epochs.size(), cpu, test_add.srocc,
                  test_add.srocc - test.srocc);
    report("synthetic-training", ok, buf);
  });

  guarded("cross-dataset", [&] {
    if (!trained) throw std::runtime_error("no trained checkpoint");
    SynthConfig b = synth, c = synth;
    b.seed = 2;
    b.dataset = "synthetic_b";
    c.seed = 3;
    c.dataset = "synthetic_c";
    synth_dataset(b, work / "B");
    synth_dataset(c, work / "C");
    const auto reports = cross_dataset_eval(work / "ckpt_text_guided", corpus_a / "manifest.json",
                                            {work / "B/manifest.json", work / "C/manifest.json"});
    const bool ok = reports.size() == 2 && reports[0].srocc >= 0.80 && reports[1].srocc >= 0.80;
    char buf[200];
    std::snprintf(buf, sizeof buf, "B SROCC %.4f (n=%zu), C SROCC %.4f (n=%zu), both >= 0.80", reports[0].srocc,
                  reports[0].n, reports[1].srocc, reports[1].n);
    report("cross-dataset", ok, buf);
  });

  guarded("determinism", [&] {
    if (!trained) throw std::runtime_error("no trained checkpoint");
    train(RunConfig{}, load_manifest(corpus_a / "manifest.json"), work / "ckpt_repeat");
    std::string why;
    const bool same_ckpt = same_tree(work / "ckpt_text_guided", work / "ckpt_repeat", why);
    const auto r1 = report_dump(evaluate(work / "ckpt_text_guided", corpus_a / "manifest.json", "test"));
    const auto r2 = report_dump(evaluate(work / "ckpt_repeat", corpus_a / "manifest.json", "test"));
    report("determinism", same_ckpt && r1 == r2,
           "checkpoints: " + why + "; reports " + (r1 == r2 ? "byte-identical" : "differ"));
  });

  guarded("storage", [] {
    const auto r = contracts::storage_contracts(1000, 2028);
    report("storage", r.ok, r.detail);
  });

  std::cout << (failures ? "acceptance FAILED: " + std::to_string(failures) + " criteria" : "acceptance passed")
            << std::endl;
  return failures ? 1 : 0;
}
