#include "losses.hpp"

#include <algorithm>
#include <string>

#include "error.hpp"

namespace wvad {

void LossConfig::validate() const {
  if (k < 1) throw ConfigError("loss k must be >= 1");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  for (double w : {weights.contrastive, weights.snippet, weights.video, weights.regularisation})
    if (w < 0.0) throw ConfigError("loss weights must be non-negative");
}

Var loss_video(std::span<const Var> video_scores, std::span<const int> labels) {
  if (video_scores.size() != labels.size())
    throw ArgumentError("loss_video: " + std::to_string(video_scores.size()) + " scores for " +
                        std::to_string(labels.size()) + " labels");
  if (video_scores.empty()) throw ArgumentError("loss_video: empty batch");
  std::vector<Var> terms;
  terms.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Var v = ops::clamp(ops::reshape(video_scores[i], {1}), kLogClamp, 1.0 - kLogClamp);
    if (labels[i] == 1) {
      terms.push_back(ops::log(v));
    } else if (labels[i] == 0) {
      terms.push_back(ops::log(ops::add_scalar(ops::scale(v, -1.0), 1.0)));
    } else {
      throw ArgumentError("loss_video: labels must be 0 or 1");
    }
  }
  return ops::scale(ops::sum(ops::concat_rows(terms)), -1.0 / static_cast<double>(labels.size()));
}

Var loss_snippet_topk(std::span<const Var> abnormal_scores, std::span<const Var> normal_scores, std::size_t k,
                      PairingRule pairing) {
  if (abnormal_scores.empty() || normal_scores.empty())
    throw ArgumentError("loss_snippet_topk needs at least one abnormal and one normal video");
  auto gk = [k](Var s) {
    if (k > s.value().size())
      throw ArgumentError("k=" + std::to_string(k) + " exceeds " + std::to_string(s.value().size()) + " snippets");
    return ops::topk_mean(s, k);
  };
  std::vector<Var> ga, gn;
  for (Var s : abnormal_scores) ga.push_back(gk(s));
  for (Var s : normal_scores) gn.push_back(gk(s));
  std::vector<Var> hinges;
  auto hinge = [](Var a, Var n) { return ops::relu(ops::add_scalar(ops::sub(n, a), 1.0)); };
  if (pairing == PairingRule::Matched) {
    const std::size_t pairs = std::max(ga.size(), gn.size());
    for (std::size_t i = 0; i < pairs; ++i) hinges.push_back(hinge(ga[i % ga.size()], gn[i % gn.size()]));
  } else {
    for (Var a : ga)
      for (Var n : gn) hinges.push_back(hinge(a, n));
  }
  return ops::sum(ops::concat_rows(hinges));
}

Var loss_regularisation(Var scores, double alpha, double beta) {
  const std::size_t T = scores.value().size();
  if (T < 2) throw ArgumentError("loss_regularisation needs at least two snippets");
  Var s = ops::reshape(scores, {1, T});
  Var diff = ops::sub(ops::slice_cols(s, 1, T - 1), ops::slice_cols(s, 0, T - 1));
  const double inv_t = 1.0 / static_cast<double>(T);
  Var smooth = ops::scale(ops::sum(ops::mul(diff, diff)), alpha * inv_t);
  Var sparse = ops::scale(ops::sum(s), beta * inv_t);
  return ops::add(smooth, sparse);
}

Var contrastive_term(Tape& tape, Var anchors, Var positives, Var negatives, double tau, Reduction reduction) {
  if (!(tau > 0.0)) throw ConfigError("contrastive temperature must be positive");
  if (!anchors.valid() || !positives.valid()) return tape.constant(Tensor::scalar(0.0));
  const double inv_tau = 1.0 / tau;
  Var a = ops::l2_normalize_rows(anchors);
  Var p = ops::l2_normalize_rows(positives);
  Var pos_logits = ops::scale(ops::matmul_nt(a, p), inv_tau);
  Var denom = ops::exp(pos_logits);
  if (negatives.valid()) {
    Var n = ops::l2_normalize_rows(negatives);
    Var neg_mass = ops::row_sum(ops::exp(ops::scale(ops::matmul_nt(a, n), inv_tau)));
    denom = ops::add_col(denom, neg_mass);
  }
  Var terms = ops::sub(ops::log(denom), pos_logits);
  return reduction == Reduction::Mean ? ops::mean(terms) : ops::sum(terms);
}

namespace {

Var gather(const std::vector<SnippetRef>& refs, std::span<const Var> features) {
  if (refs.empty()) return Var();
  std::vector<Var> parts;
  std::size_t i = 0;
  while (i < refs.size()) {
    const std::size_t v = refs[i].video;
    if (v >= features.size()) throw ArgumentError("mined snippet refers to video " + std::to_string(v) + " outside the batch");
    std::vector<std::size_t> rows;
    for (; i < refs.size() && refs[i].video == v; ++i) rows.push_back(refs[i].t);
    parts.push_back(ops::gather_rows(features[v], rows));
  }
  return parts.size() == 1 ? parts[0] : ops::concat_rows(parts);
}

}  // namespace

Var loss_contrastive(Tape& tape, const MinedSets& mined, std::span<const Var> features, double tau,
                     Reduction reduction) {
  if (!(tau > 0.0)) throw ConfigError("contrastive temperature must be positive");
  Var ha = gather(mined.hard_abnormal, features);
  Var ea = gather(mined.easy_abnormal, features);
  Var hn = gather(mined.hard_normal, features);
  Var en = gather(mined.easy_normal, features);
  return ops::add(contrastive_term(tape, ha, ea, en, tau, reduction), contrastive_term(tape, hn, en, ea, tau, reduction));
}

LossBreakdown LossTerms::values() const {
  return {total.value().item(), snippet.value().item(), video.value().item(), regularisation.value().item(),
          contrastive.value().item()};
}

LossTerms loss_total(Tape& tape, std::span<const VideoOutput> batch, const MinedSets& mined, const LossConfig& config) {
  config.validate();
  std::vector<Var> abn, nrm, vids, feats;
  std::vector<int> labels;
  for (const auto& v : batch) {
    (v.label == 1 ? abn : nrm).push_back(v.snippet_scores);
    vids.push_back(v.video_score);
    feats.push_back(v.snippet_features);
    labels.push_back(v.label);
  }
  if (abn.empty() || nrm.empty()) throw TrainingError("batch must contain both normal and abnormal videos");

  LossTerms t;
  t.snippet = loss_snippet_topk(abn, nrm, config.k, config.pairing);
  t.video = loss_video(vids, labels);
  std::vector<Var> regs;
  for (const auto& v : batch) regs.push_back(loss_regularisation(v.snippet_scores, config.alpha, config.beta));
  t.regularisation = ops::sum(ops::concat_rows(regs));
  t.contrastive = loss_contrastive(tape, mined, feats, config.tau, config.contrastive_reduction);

  // Fixed summation order: cnt, snp, vid, reg.
  const std::pair<Var, double> weighted[] = {{t.contrastive, config.weights.contrastive},
                                             {t.snippet, config.weights.snippet},
                                             {t.video, config.weights.video},
                                             {t.regularisation, config.weights.regularisation}};
  Var total;
  for (const auto& [term, w] : weighted) {
    if (w == 0.0) continue;
    Var scaled = w == 1.0 ? term : ops::scale(term, w);
    total = total.valid() ? ops::add(total, scaled) : scaled;
  }
  t.total = total.valid() ? total : tape.constant(Tensor::scalar(0.0));
  return t;
}

}  // namespace wvad
