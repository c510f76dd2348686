#pragma once

#include <span>
#include <vector>

#include "autograd.hpp"
#include "mining.hpp"

namespace wvad {

enum class PairingRule { Matched, AllPairs };

// How each contrastive half combines its (anchor, positive) pairs.
enum class Reduction { Sum, Mean };

struct LossWeights {
  double contrastive = 1.0;
  double snippet = 1.0;
  double video = 1.0;
  double regularisation = 1.0;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossConfig {
  std::size_t k = 3;
  double alpha = 5e-4;  // temporal smoothness weight
  double beta = 5e-4;   // sparsity weight
  double tau = 0.07;    // contrastive temperature
  LossWeights weights;
  PairingRule pairing = PairingRule::Matched;
  Reduction contrastive_reduction = Reduction::Mean;

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossBreakdown {
  double total = 0.0, snippet = 0.0, video = 0.0, regularisation = 0.0, contrastive = 0.0;
};

// Outputs of one video's forward pass, as consumed by the objective.
struct VideoOutput {
  Var snippet_scores;    // {T}
  Var video_score;       // {1}
  Var snippet_features;  // [T x D]
  int label = 0;
};

inline constexpr double kLogClamp = 1e-7;

// Binary cross entropy averaged over the batch, with scores clamped to
// [1e-7, 1 - 1e-7].
Var loss_video(std::span<const Var> video_scores, std::span<const int> labels);

// Top-k ranking hinge max(0, 1 - g_k(abnormal) + g_k(normal)), summed over
// abnormal/normal pairs. Matched pairing walks both lists in step, wrapping
// the shorter one.
Var loss_snippet_topk(std::span<const Var> abnormal_scores, std::span<const Var> normal_scores, std::size_t k,
                      PairingRule pairing = PairingRule::Matched);

// alpha/T * sum (s_t - s_{t-1})^2 + beta/T * sum s_t for one score sequence.
Var loss_regularisation(Var scores, double alpha, double beta);

// -sum over (anchor, positive) of log softmax of the positive against the
// negatives, on L2-normalised rows at temperature tau. An invalid (empty)
// anchor or positive set yields a constant zero on `tape`. Mean divides by the
// number of (anchor, positive) pairs.
Var contrastive_term(Tape& tape, Var anchors, Var positives, Var negatives, double tau,
                     Reduction reduction = Reduction::Sum);

// Both halves: (HA, EA, EN) + (HN, EN, EA). `features[i]` are the snippet
// features of batch video i.
Var loss_contrastive(Tape& tape, const MinedSets& mined, std::span<const Var> features, double tau,
                     Reduction reduction = Reduction::Sum);

struct LossTerms {
  Var total, snippet, video, regularisation, contrastive;
  LossBreakdown values() const;
};

// Weighted sum of the four terms. Throws TrainingError unless the batch holds
// both classes.
LossTerms loss_total(Tape& tape, std::span<const VideoOutput> batch, const MinedSets& mined, const LossConfig& config);

}  // namespace wvad
