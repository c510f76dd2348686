#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace wvad {

using BinarySequence = std::vector<std::uint8_t>;

struct MiningConfig {
  double threshold = 0.5;          // epsilon: a snippet is predicted abnormal iff score > threshold
  std::size_t erosion_width = 3;   // odd structuring-element width
  std::size_t region_length = 5;   // K
  std::size_t region_min_count = 3;  // R, a majority of K
  std::size_t k_hard_normal = 3;
  std::size_t k_easy = 3;

  // Checks field ranges; `snippets` bounds K when non-zero.
  void validate(std::size_t snippets = 0) const;
  friend bool operator==(const MiningConfig&, const MiningConfig&) = default;
};

struct SnippetRef {
  std::size_t video = 0;  // position of the video in its batch
  std::size_t t = 0;
  friend auto operator<=>(const SnippetRef&, const SnippetRef&) = default;
};

// Hard/easy abnormal snippets come from y=1 videos, hard/easy normal from y=0.
struct MinedSets {
  std::vector<SnippetRef> hard_abnormal, easy_abnormal, hard_normal, easy_normal;
  bool empty() const {
    return hard_abnormal.empty() && easy_abnormal.empty() && hard_normal.empty() && easy_normal.empty();
  }
  friend bool operator==(const MinedSets&, const MinedSets&) = default;
};

BinarySequence threshold_predictions(std::span<const double> scores, double threshold);

// Binary erosion with replicate padding: out(t) = 1 iff every entry in the
// window of `width` centred at t is 1.
BinarySequence erode(std::span<const std::uint8_t> pred, std::size_t width);

// Predicted-abnormal positions removed by erosion: the boundary snippets of
// every predicted run.
std::vector<std::size_t> temporal_edges(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> eroded);

// Zeros inside any length-K window holding at least R ones.
std::vector<std::size_t> missed_pseudo_abnormal(std::span<const std::uint8_t> pred, std::size_t region_length,
                                                std::size_t min_count);

// All index sets below are sorted ascending.
std::vector<std::size_t> mine_hard_abnormal(std::span<const double> scores, const MiningConfig& config);
std::vector<std::size_t> mine_hard_normal(std::span<const double> scores, std::size_t k);
// label 1: top-k minus `hard_abnormal`; label 0: bottom-k.
std::vector<std::size_t> mine_easy(std::span<const double> scores, int label, std::size_t k,
                                   std::span<const std::size_t> hard_abnormal = {});

// Mines every video of a batch. scores[i] are the detached snippet scores of
// video i and labels[i] its video-level label.
MinedSets mine_batch(std::span<const std::vector<double>> scores, std::span<const int> labels,
                     const MiningConfig& config);

}  // namespace wvad
