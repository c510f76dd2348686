#include "metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "error.hpp"

namespace wvad {

void EvalRecord::append(std::span<const double> s, std::span<const std::uint8_t> l) {
  if (s.size() != l.size()) throw ArgumentError("scores and labels differ in length");
  scores.insert(scores.end(), s.begin(), s.end());
  labels.insert(labels.end(), l.begin(), l.end());
}

std::vector<double> snippet_to_frame_scores(std::span<const double> snippet_scores, std::size_t num_frames) {
  const std::size_t T = snippet_scores.size();
  if (T == 0 || num_frames < T)
    throw ArgumentError("cannot spread " + std::to_string(T) + " snippets over " + std::to_string(num_frames) + " frames");
  std::vector<double> out(num_frames);
  for (std::size_t f = 0; f < num_frames; ++f) out[f] = snippet_scores[f * T / num_frames];
  return out;
}

namespace {

void check(const EvalRecord& r) {
  if (r.scores.size() != r.labels.size()) throw ArgumentError("scores and labels differ in length");
  for (auto l : r.labels)
    if (l > 1) throw ArgumentError("labels must be 0 or 1");
}

}  // namespace

double roc_auc(const EvalRecord& r) {
  check(r);
  const std::size_t n = r.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return r.scores[a] < r.scores[b]; });

  // Walk ascending score groups; every positive beats all negatives in lower
  // groups and ties with negatives in its own group. Counts are kept doubled
  // so ties stay integral.
  std::uint64_t neg_below = 0, twice_wins = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < n && r.scores[idx[j]] == r.scores[idx[i]]) {
      (r.labels[idx[j]] ? gp : gn) += 1;
      ++j;
    }
    twice_wins += gp * (2 * neg_below + gn);
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) throw UndefinedMetricError("ROC AUC needs both positive and negative frames");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(const EvalRecord& r) {
  check(r);
  const std::size_t n = r.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (r.scores[a] != r.scores[b]) return r.scores[a] > r.scores[b];
    return r.labels[a] < r.labels[b];
  });
  std::uint64_t hits = 0;
  double acc = 0.0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (!r.labels[idx[rank]]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  if (hits == 0) throw UndefinedMetricError("average precision needs at least one positive frame");
  return acc / static_cast<double>(hits);
}

}  // namespace wvad
