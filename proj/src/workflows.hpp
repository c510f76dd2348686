#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "evaluation.hpp"
#include "gradcheck_suite.hpp"
#include "mining.hpp"

namespace wvad {

using LineSink = std::function<void(const std::string&)>;

// Every workflow writes <out>/run.json echoing the resolved configuration.
void write_run_json(const std::filesystem::path& out_dir, const std::string& command, const nlohmann::json& details);

void run_synth(const RunConfig& config, const std::filesystem::path& out_dir);

// Trains into out_dir (train_log.csv, checkpoint.wvck). With `resume`, the
// optimiser state, RNG and epoch counter continue from that checkpoint.
TrainState run_train(const RunConfig& config, const std::filesystem::path& data_dir,
                     const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& resume,
                     const LineSink& progress = {});

// Writes frames.csv (video_id,frame,score,label) and metrics.json.
EvalResult run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out_dir);

// Score CSV rows: video_id,t,score,video_label.
struct ScoreRow {
  std::string video_id;
  std::size_t t = 0;
  double score = 0.0;
  int video_label = 0;
};

std::vector<ScoreRow> parse_scores_csv(const std::filesystem::path& path);

struct MinedRow {
  std::string set;  // HA, EA, HN or EN
  std::string video_id;
  std::size_t t = 0;
};

std::vector<MinedRow> mine_score_rows(const std::vector<ScoreRow>& rows, const MiningConfig& config);

// Reads a score CSV and writes <out>/mined.csv (set,video_id,t).
std::vector<MinedRow> run_mine(const RunConfig& config, const std::filesystem::path& scores_csv,
                               const std::filesystem::path& out_dir);

// Writes <out>/scores.csv for the chosen split ("train", "test" or "all").
void run_export_scores(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                       const std::filesystem::path& out_dir, const std::string& split);

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

// (a) linear top-k MIL on raw features, (b) + convolutional transformer,
// (c) + video loss, (d) + contrastive loss; (d) is `base` unchanged.
std::vector<AblationVariant> ablation_variants(const TrainConfig& base);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double auc = 0.0;
  double ap = 0.0;
};

std::vector<AblationRow> run_ablate(const RunConfig& config, const std::filesystem::path& data_dir,
                                    const std::filesystem::path& out_dir, const LineSink& progress = {});

// Writes gradcheck.txt and run.json into out_dir when one is given.
SuiteReport run_gradcheck(const RunConfig& config, bool inject_faulty_op,
                          const std::optional<std::filesystem::path>& out_dir, const LineSink& progress = {});

}  // namespace wvad
