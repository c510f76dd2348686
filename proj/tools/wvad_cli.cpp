// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "wvad/wvad.h"

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out = "out";
};

void print_line(const char* line, void*) { std::printf("%s\n", line); std::fflush(stdout); }

int fail(wvad_status s) {
  std::fprintf(stderr, "error: %s\n", wvad_last_error());
  return static_cast<int>(s);
}

// Resolves --config/--seed into a config handle.
wvad_status make_config(const Globals& g, wvad_config** cfg) {
  wvad_status s = g.config_path.empty() ? wvad_config_default(cfg) : wvad_config_from_file(g.config_path.c_str(), cfg);
  if (s != WVAD_OK) return s;
  if (g.has_seed) s = wvad_config_set_seed(*cfg, g.seed);
  return s;
}

struct ConfigHandle {
  wvad_config* cfg = nullptr;
  ~ConfigHandle() { wvad_config_free(cfg); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised video anomaly detection on snippet features"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "Override data, training and ablation seeds");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::string data, checkpoint, resume, scores, split = "all";
  bool inject = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset into --out");
  auto* train = app.add_subcommand("train", "Train a model, writing checkpoint.wvck and train_log.csv");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  auto* eval = app.add_subcommand("eval", "Frame-level AUC/AP, per-frame CSV and metrics.json");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  auto* mine = app.add_subcommand("mine", "Mine hard/easy snippet sets from a score CSV");
  mine->add_option("--scores", scores, "CSV with columns video_id,t,score,video_label")->required();
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_flag("--inject-faulty-op", inject, "Add an op with a wrong backward rule");
  auto* ablate = app.add_subcommand("ablate", "Train the four ablation configurations over the configured seeds");
  ablate->add_option("--data", data, "Dataset directory")->required();
  auto* export_scores = app.add_subcommand("export-scores", "Write per-snippet scores as CSV");
  export_scores->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  export_scores->add_option("--data", data, "Dataset directory")->required();
  export_scores->add_option("--split", split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : WVAD_ERR_CONFIG;
  }
  g.has_seed = seed_opt->count() > 0;

  ConfigHandle h;
  wvad_status s = make_config(g, &h.cfg);
  if (s != WVAD_OK) return fail(s);
  const char* out = g.out.c_str();

  if (synth->parsed()) {
    s = wvad_synth(h.cfg, out);
  } else if (train->parsed()) {
    s = wvad_train(h.cfg, data.c_str(), out, resume.empty() ? nullptr : resume.c_str(), print_line, nullptr);
  } else if (eval->parsed()) {
    double auc = 0.0, ap = 0.0;
    s = wvad_eval(checkpoint.c_str(), data.c_str(), out, &auc, &ap);
    if (s == WVAD_OK) std::printf("AUC=%.6f AP=%.6f\n", auc, ap);
  } else if (mine->parsed()) {
    std::size_t n = 0;
    s = wvad_mine(h.cfg, scores.c_str(), out, &n);
    if (s == WVAD_OK) std::printf("mined %zu snippets\n", n);
  } else if (gradcheck->parsed()) {
    int passed = 0;
    s = wvad_gradcheck(h.cfg, inject ? 1 : 0, out, print_line, nullptr, &passed);
    if (s == WVAD_OK) {
      std::printf("%s\n", passed ? "gradcheck PASS" : "gradcheck FAIL");
      if (!passed) return WVAD_ERR_NUMERIC;
    }
  } else if (ablate->parsed()) {
    s = wvad_ablate(h.cfg, data.c_str(), out, print_line, nullptr);
  } else if (export_scores->parsed()) {
    s = wvad_export_scores(checkpoint.c_str(), data.c_str(), out, split.c_str());
  }
  return s == WVAD_OK ? 0 : fail(s);
}
