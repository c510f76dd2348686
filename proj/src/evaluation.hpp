#pragma once

#include <string>
#include <vector>

#include "encoder.hpp"
#include "metrics.hpp"
#include "synthdata.hpp"

namespace wvad {

struct VideoScores {
  std::vector<double> snippets;
  double video = 0.0;
};

VideoScores score_video(const ModelParams& params, const Tensor& features);

struct FrameRow {
  std::string video_id;
  std::size_t frame = 0;
  double score = 0.0;
  int label = 0;
};

struct EvalResult {
  double auc = 0.0;
  double ap = 0.0;
  std::vector<FrameRow> frames;
};

// Frame-level AUC/AP over every test video that carries frame labels.
EvalResult evaluate(const ModelParams& params, const Dataset& dataset);

std::string eval_summary(const EvalResult& r);  // "AUC=<x> AP=<y>"

}  // namespace wvad
