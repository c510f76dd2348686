#include "evaluation.hpp"

#include <cstdio>

#include "error.hpp"

namespace wvad {

VideoScores score_video(const ModelParams& params, const Tensor& features) {
  Tape tape;
  Forward fwd(tape, params, /*requires_grad=*/false);
  EncodedVideo enc = fwd.encode(features);
  VideoScores out;
  out.snippets = fwd.snippet_scores(enc).value().values();
  out.video = fwd.video_score(enc).value().item();
  return out;
}

EvalResult evaluate(const ModelParams& params, const Dataset& dataset) {
  EvalResult result;
  EvalRecord record;
  for (const Video* v : dataset.split(Split::Test)) {
    if (v->frame_labels.empty()) continue;
    const auto scores = score_video(params, v->features);
    const auto frames = snippet_to_frame_scores(scores.snippets, v->record.num_frames);
    record.append(frames, v->frame_labels);
    for (std::size_t f = 0; f < frames.size(); ++f)
      result.frames.push_back({v->record.id, f, frames[f], v->frame_labels[f]});
  }
  if (record.scores.empty()) throw UndefinedMetricError("dataset has no labelled test videos");
  result.auc = roc_auc(record);
  result.ap = average_precision(record);
  return result;
}

std::string eval_summary(const EvalResult& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "AUC=%.6f AP=%.6f", r.auc, r.ap);
  return buf;
}

}  // namespace wvad
