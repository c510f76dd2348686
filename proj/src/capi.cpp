#include "wvad/wvad.h"

#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "workflows.hpp"

struct wvad_config {
  wvad::RunConfig config;
  std::string json;
};

struct wvad_model {
  wvad::ModelParams params;
};

namespace {

thread_local std::string last_error;

template <class F>
wvad_status guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return WVAD_OK;
  } catch (const wvad::Error& e) {
    last_error = e.what();
    return static_cast<wvad_status>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("config error: ") + e.what();
    return WVAD_ERR_CONFIG;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return WVAD_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return WVAD_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return WVAD_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw wvad::ArgumentError(std::string(what) + " must not be null");
}

wvad::LineSink sink(wvad_line_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* wvad_version(void) { return "1.0.0"; }

const char* wvad_last_error(void) { return last_error.c_str(); }

wvad_status wvad_config_default(wvad_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new wvad_config{wvad::default_config(), {}};
  });
}

wvad_status wvad_config_from_file(const char* path, wvad_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new wvad_config{wvad::load_config(path), {}};
  });
}

wvad_status wvad_config_from_string(const char* json, wvad_config** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new wvad_config{wvad::parse_config_text(json), {}};
  });
}

wvad_status wvad_config_set_seed(wvad_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->config.override_seed(seed);
  });
}

wvad_status wvad_config_to_json(wvad_config* cfg, const char** json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(json, "json");
    cfg->json = wvad::to_json(cfg->config).dump(2);
    *json = cfg->json.c_str();
  });
}

void wvad_config_free(wvad_config* cfg) { delete cfg; }

wvad_status wvad_synth(const wvad_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    wvad::run_synth(cfg->config, out_dir);
  });
}

wvad_status wvad_train(const wvad_config* cfg, const char* data_dir, const char* out_dir,
                       const char* resume_checkpoint, wvad_line_fn on_step, void* user) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    std::optional<std::filesystem::path> resume;
    if (resume_checkpoint != nullptr) resume = resume_checkpoint;
    wvad::run_train(cfg->config, data_dir, out_dir, resume, sink(on_step, user));
  });
}

wvad_status wvad_eval(const char* checkpoint, const char* data_dir, const char* out_dir, double* auc, double* ap) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const auto r = wvad::run_eval(checkpoint, data_dir, out_dir);
    if (auc) *auc = r.auc;
    if (ap) *ap = r.ap;
  });
}

wvad_status wvad_mine(const wvad_config* cfg, const char* scores_csv, const char* out_dir, size_t* mined_count) {
  return guarded([&] {
    require(cfg, "cfg");
    require(scores_csv, "scores_csv");
    require(out_dir, "out_dir");
    const auto rows = wvad::run_mine(cfg->config, scores_csv, out_dir);
    if (mined_count) *mined_count = rows.size();
  });
}

wvad_status wvad_export_scores(const char* checkpoint, const char* data_dir, const char* out_dir, const char* split) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    wvad::run_export_scores(checkpoint, data_dir, out_dir, split ? split : "all");
  });
}

wvad_status wvad_ablate(const wvad_config* cfg, const char* data_dir, const char* out_dir, wvad_line_fn on_row,
                        void* user) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    wvad::run_ablate(cfg->config, data_dir, out_dir, sink(on_row, user));
  });
}

wvad_status wvad_gradcheck(const wvad_config* cfg, int inject_faulty_op, const char* out_dir, wvad_line_fn on_entry,
                           void* user, int* passed) {
  return guarded([&] {
    require(cfg, "cfg");
    std::optional<std::filesystem::path> out;
    if (out_dir != nullptr) out = out_dir;
    const auto report = wvad::run_gradcheck(cfg->config, inject_faulty_op != 0, out, sink(on_entry, user));
    if (passed) *passed = report.passed ? 1 : 0;
  });
}

wvad_status wvad_model_load(const char* checkpoint, wvad_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new wvad_model{wvad::load_checkpoint(checkpoint).params};
  });
}

wvad_status wvad_model_dims(const wvad_model* m, size_t* snippets, size_t* feature_dim) {
  return guarded([&] {
    require(m, "model");
    if (snippets) *snippets = m->params.config.snippets;
    if (feature_dim) *feature_dim = m->params.config.input_dim;
  });
}

wvad_status wvad_model_score(const wvad_model* m, const float* features, size_t snippets, size_t feature_dim,
                             double* snippet_scores, double* video_score) {
  return guarded([&] {
    require(m, "model");
    require(features, "features");
    const auto& c = m->params.config;
    if (snippets != c.snippets || feature_dim != c.input_dim)
      throw wvad::DimensionError("features must be " + std::to_string(c.snippets) + "x" +
                                 std::to_string(c.input_dim));
    wvad::Tensor x({snippets, feature_dim}, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = features[i];
    const auto s = wvad::score_video(m->params, x);
    if (snippet_scores)
      for (std::size_t t = 0; t < s.snippets.size(); ++t) snippet_scores[t] = s.snippets[t];
    if (video_score) *video_score = s.video;
  });
}

void wvad_model_free(wvad_model* m) { delete m; }

}  // extern "C"
