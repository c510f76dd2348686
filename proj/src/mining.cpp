#include "mining.hpp"

#include <algorithm>
#include <string>

#include "autograd.hpp"
#include "error.hpp"

namespace wvad {

void MiningConfig::validate(std::size_t snippets) const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("mining threshold must lie in (0,1)");
  if (erosion_width == 0 || erosion_width % 2 == 0) throw ConfigError("erosion_width must be odd");
  if (region_min_count < 1 || region_min_count > region_length)
    throw ConfigError("need 1 <= region_min_count <= region_length");
  if (snippets != 0 && region_length > snippets) throw ConfigError("region_length exceeds the snippet count");
  if (k_hard_normal < 1 || k_easy < 1) throw ConfigError("mining k values must be >= 1");
  if (snippets != 0 && (k_hard_normal > snippets || k_easy > snippets))
    throw ConfigError("mining k values exceed the snippet count");
}

BinarySequence threshold_predictions(std::span<const double> scores, double threshold) {
  BinarySequence out(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) out[t] = scores[t] > threshold ? 1 : 0;
  return out;
}

BinarySequence erode(std::span<const std::uint8_t> pred, std::size_t width) {
  if (width == 0 || width % 2 == 0) throw ArgumentError("erosion width must be odd");
  const std::size_t n = pred.size();
  BinarySequence out(n, 0);
  const auto r = static_cast<std::ptrdiff_t>(width / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::size_t t = 0; t < n; ++t) {
    bool all = true;
    for (std::ptrdiff_t d = -r; d <= r && all; ++d)
      all = pred[static_cast<std::size_t>(std::clamp(static_cast<std::ptrdiff_t>(t) + d, std::ptrdiff_t{0}, last))] != 0;
    out[t] = all ? 1 : 0;
  }
  return out;
}

std::vector<std::size_t> temporal_edges(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> eroded) {
  if (pred.size() != eroded.size()) throw ArgumentError("temporal_edges: length mismatch");
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < pred.size(); ++t)
    if (pred[t] && !eroded[t]) out.push_back(t);
  return out;
}

std::vector<std::size_t> missed_pseudo_abnormal(std::span<const std::uint8_t> pred, std::size_t region_length,
                                                std::size_t min_count) {
  const std::size_t n = pred.size();
  if (region_length == 0 || min_count > region_length || region_length > n)
    throw ArgumentError("missed_pseudo_abnormal needs R <= K <= T (R=" + std::to_string(min_count) +
                        ", K=" + std::to_string(region_length) + ", T=" + std::to_string(n) + ")");
  std::vector<std::uint8_t> flagged(n, 0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < region_length; ++t) count += pred[t];
  for (std::size_t start = 0;; ++start) {
    if (count >= min_count)
      for (std::size_t t = start; t < start + region_length; ++t)
        if (!pred[t]) flagged[t] = 1;
    if (start + region_length >= n) break;
    count += pred[start + region_length];
    count -= pred[start];
  }
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < n; ++t)
    if (flagged[t]) out.push_back(t);
  return out;
}

std::vector<std::size_t> mine_hard_abnormal(std::span<const double> scores, const MiningConfig& config) {
  const BinarySequence pred = threshold_predictions(scores, config.threshold);
  const BinarySequence eroded = erode(pred, config.erosion_width);
  std::vector<std::size_t> edges = temporal_edges(pred, eroded);
  std::vector<std::size_t> missed = missed_pseudo_abnormal(pred, config.region_length, config.region_min_count);
  std::vector<std::size_t> out;
  std::set_union(edges.begin(), edges.end(), missed.begin(), missed.end(), std::back_inserter(out));
  return out;
}

std::vector<std::size_t> mine_hard_normal(std::span<const double> scores, std::size_t k) {
  auto idx = ops::topk_indices(scores, k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> mine_easy(std::span<const double> scores, int label, std::size_t k,
                                   std::span<const std::size_t> hard_abnormal) {
  if (label != 0 && label != 1) throw ArgumentError("video label must be 0 or 1");
  std::vector<std::size_t> idx;
  if (label == 1) {
    idx = ops::topk_indices(scores, k);
    std::erase_if(idx, [&](std::size_t t) { return std::find(hard_abnormal.begin(), hard_abnormal.end(), t) != hard_abnormal.end(); });
  } else {
    std::vector<double> negated(scores.begin(), scores.end());
    for (double& v : negated) v = -v;
    idx = ops::topk_indices(negated, k);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

MinedSets mine_batch(std::span<const std::vector<double>> scores, std::span<const int> labels,
                     const MiningConfig& config) {
  if (scores.size() != labels.size()) throw ArgumentError("mine_batch: one label per score sequence");
  MinedSets sets;
  auto push = [](std::vector<SnippetRef>& dst, std::size_t v, const std::vector<std::size_t>& ts) {
    for (std::size_t t : ts) dst.push_back({v, t});
  };
  for (std::size_t v = 0; v < scores.size(); ++v) {
    const auto& s = scores[v];
    if (labels[v] == 1) {
      auto hard = mine_hard_abnormal(s, config);
      push(sets.easy_abnormal, v, mine_easy(s, 1, config.k_easy, hard));
      push(sets.hard_abnormal, v, hard);
    } else if (labels[v] == 0) {
      push(sets.hard_normal, v, mine_hard_normal(s, config.k_hard_normal));
      push(sets.easy_normal, v, mine_easy(s, 0, config.k_easy));
    } else {
      throw ArgumentError("video label must be 0 or 1");
    }
  }
  return sets;
}

}  // namespace wvad
