#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace wvad {

// Frame scores and binary labels concatenated over all evaluated videos.
struct EvalRecord {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  void append(std::span<const double> s, std::span<const std::uint8_t> l);
};

// Frame f receives the score of snippet floor(f * T / num_frames).
std::vector<double> snippet_to_frame_scores(std::span<const double> snippet_scores, std::size_t num_frames);

// Mann-Whitney AUC: P(pos > neg) + 0.5 P(pos == neg), computed exactly from
// integer pair counts.
double roc_auc(const EvalRecord& records);

// Non-interpolated AP over a descending ranking in which negatives precede
// positives at equal score.
double average_precision(const EvalRecord& records);

}  // namespace wvad
