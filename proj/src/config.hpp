#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthdata.hpp"
#include "trainer.hpp"

namespace wvad {

struct GradCheckConfig {
  std::size_t seeds = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
};

// One schema for every subcommand. Sections and keys are optional; unknown
// keys anywhere are rejected.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  GradCheckConfig gradcheck;

  void validate() const;
  // Overrides the synth seed, the training seed and the ablation seed list.
  void override_seed(std::uint64_t seed);
};

// Desk-scale defaults: T=32, D_in=D_model=32, 4 heads, depth 2, 50 epochs,
// 16+16 videos per batch.
RunConfig default_config();

RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace wvad
