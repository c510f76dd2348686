#include "workflows.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "error.hpp"

namespace wvad {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create output directory " + p.string());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot open " + p.string() + " for writing");
  return f;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

void require_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw IoError("no dataset at " + dir.string() + " (manifest.json missing)");
}

}  // namespace

void write_run_json(const fs::path& out_dir, const std::string& command, const json& details) {
  ensure_dir(out_dir);
  json j = details;
  j["command"] = command;
  auto f = open_out(out_dir / "run.json");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing run.json");
}

void run_synth(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  generate_dataset(config.synth, out_dir);
  write_run_json(out_dir, "synth", {{"config", to_json(config)}});
}

TrainState run_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir,
                     const std::optional<fs::path>& resume, const LineSink& progress) {
  config.validate();
  require_dataset(data_dir);
  Dataset ds = load_dataset(data_dir);
  ensure_dir(out_dir);
  json details{{"config", to_json(config)}, {"dataset", data_dir.string()}, {"out", out_dir.string()}};
  if (resume) details["resume"] = resume->string();
  write_run_json(out_dir, "train", details);

  TrainState state = resume ? load_checkpoint(*resume) : initial_state(config.train);
  if (resume && state.optimizer.first.empty() && state.epochs_completed == 0 && state.step == 0)
    state.rng.seed(config.train.seed ^ 0x5eedf00dull);
  TrainOptions opts;
  opts.out_dir = out_dir;
  if (progress)
    opts.on_step = [&](const LogRow& r) { progress(format_log_row(r)); };
  train(ds, config.train, state, opts);
  return state;
}

EvalResult run_eval(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out_dir) {
  require_dataset(data_dir);
  ModelParams params = load_checkpoint(checkpoint).params;
  Dataset ds = load_dataset(data_dir);
  EvalResult r = evaluate(params, ds);
  ensure_dir(out_dir);
  {
    auto f = open_out(out_dir / "frames.csv");
    f << "video_id,frame,score,label\n";
    for (const auto& row : r.frames) f << row.video_id << ',' << row.frame << ',' << fmt_double(row.score) << ',' << row.label << '\n';
    if (!f) throw IoError("failed writing frames.csv");
  }
  {
    auto f = open_out(out_dir / "metrics.json");
    f << json{{"auc", r.auc}, {"ap", r.ap}}.dump(2) << '\n';
  }
  write_run_json(out_dir, "eval", {{"checkpoint", checkpoint.string()}, {"dataset", data_dir.string()},
                                   {"auc", r.auc}, {"ap", r.ap}});
  return r;
}

std::vector<ScoreRow> parse_scores_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<ScoreRow> rows;
  std::string line;
  std::size_t lineno = 0;
  auto bad = [&](const std::string& why) {
    return ArgumentError("malformed scores CSV " + path.string() + " line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_csv(line);
    if (lineno == 1 && !cols.empty() && cols[0] == "video_id") {
      if (cols != std::vector<std::string>{"video_id", "t", "score", "video_label"}) throw bad("unexpected header");
      continue;
    }
    if (cols.size() != 4) throw bad("expected 4 columns");
    ScoreRow r;
    r.video_id = cols[0];
    if (r.video_id.empty()) throw bad("empty video_id");
    auto parse_uint = [&](const std::string& s, std::size_t& dst) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), dst);
      if (ec != std::errc() || p != s.data() + s.size()) throw bad("not an integer: " + s);
    };
    parse_uint(cols[1], r.t);
    std::size_t label = 0;
    parse_uint(cols[3], label);
    if (label > 1) throw bad("video_label must be 0 or 1");
    r.video_label = static_cast<int>(label);
    try {
      std::size_t used = 0;
      r.score = std::stod(cols[2], &used);
      if (used != cols[2].size()) throw bad("not a number: " + cols[2]);
    } catch (const std::logic_error&) {
      throw bad("not a number: " + cols[2]);
    }
    if (!std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0) throw bad("score outside [0,1]");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MinedRow> mine_score_rows(const std::vector<ScoreRow>& rows, const MiningConfig& config) {
  // Videos in order of first appearance; snippets must cover 0..T-1 exactly once.
  std::vector<std::string> order;
  std::map<std::string, std::pair<int, std::map<std::size_t, double>>> videos;
  for (const auto& r : rows) {
    auto [it, inserted] = videos.try_emplace(r.video_id, r.video_label, std::map<std::size_t, double>{});
    if (inserted) order.push_back(r.video_id);
    if (it->second.first != r.video_label) throw ArgumentError("video " + r.video_id + " has conflicting labels");
    if (!it->second.second.emplace(r.t, r.score).second)
      throw ArgumentError("video " + r.video_id + " repeats snippet " + std::to_string(r.t));
  }
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;
  for (const auto& id : order) {
    const auto& [label, by_t] = videos.at(id);
    std::vector<double> s;
    for (const auto& [t, v] : by_t) {
      if (t != s.size()) throw ArgumentError("video " + id + " is missing snippet " + std::to_string(s.size()));
      s.push_back(v);
    }
    scores.push_back(std::move(s));
    labels.push_back(label);
  }
  config.validate();
  const MinedSets mined = mine_batch(scores, labels, config);
  std::vector<MinedRow> out;
  auto emit = [&](const char* name, const std::vector<SnippetRef>& refs) {
    for (const auto& r : refs) out.push_back({name, order[r.video], r.t});
  };
  emit("HA", mined.hard_abnormal);
  emit("EA", mined.easy_abnormal);
  emit("HN", mined.hard_normal);
  emit("EN", mined.easy_normal);
  return out;
}

std::vector<MinedRow> run_mine(const RunConfig& config, const fs::path& scores_csv, const fs::path& out_dir) {
  const auto rows = parse_scores_csv(scores_csv);
  const auto mined = mine_score_rows(rows, config.train.mining);
  ensure_dir(out_dir);
  auto f = open_out(out_dir / "mined.csv");
  f << "set,video_id,t\n";
  for (const auto& m : mined) f << m.set << ',' << m.video_id << ',' << m.t << '\n';
  if (!f) throw IoError("failed writing mined.csv");
  write_run_json(out_dir, "mine", {{"config", to_json(config)}, {"scores", scores_csv.string()}});
  return mined;
}

void run_export_scores(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out_dir,
                       const std::string& split) {
  if (split != "train" && split != "test" && split != "all") throw ArgumentError("split must be train, test or all");
  require_dataset(data_dir);
  ModelParams params = load_checkpoint(checkpoint).params;
  Dataset ds = load_dataset(data_dir);
  ensure_dir(out_dir);
  auto f = open_out(out_dir / "scores.csv");
  f << "video_id,t,score,video_label\n";
  for (const auto& v : ds.videos) {
    if (split != "all" && split_name(v.record.split) != split) continue;
    const auto s = score_video(params, v.features);
    for (std::size_t t = 0; t < s.snippets.size(); ++t)
      f << v.record.id << ',' << t << ',' << fmt_double(s.snippets[t]) << ',' << v.record.video_label << '\n';
  }
  if (!f) throw IoError("failed writing scores.csv");
  write_run_json(out_dir, "export-scores",
                 {{"checkpoint", checkpoint.string()}, {"dataset", data_dir.string()}, {"split", split}});
}

std::vector<AblationVariant> ablation_variants(const TrainConfig& base) {
  TrainConfig a = base, b = base, c = base;
  a.encoder.use_transformer = false;
  for (TrainConfig* cfg : {&a, &b}) {
    cfg->loss.weights.video = 0.0;
    cfg->loss.weights.contrastive = 0.0;
  }
  c.loss.weights.contrastive = 0.0;
  return {{"a_topk_linear", a}, {"b_cte", b}, {"c_cte_vid", c}, {"d_full", base}};
}

std::vector<AblationRow> run_ablate(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir,
                                    const LineSink& progress) {
  config.validate();
  require_dataset(data_dir);
  Dataset ds = load_dataset(data_dir);
  ensure_dir(out_dir);
  write_run_json(out_dir, "ablate", {{"config", to_json(config)}, {"dataset", data_dir.string()}});
  std::vector<AblationRow> rows;
  auto f = open_out(out_dir / "ablation.csv");
  f << "config,seed,AUC,AP\n";
  for (std::uint64_t seed : config.ablation_seeds) {
    for (auto variant : ablation_variants(config.train)) {
      variant.config.seed = seed;
      TrainState state = initial_state(variant.config);
      TrainOptions opts;
      opts.out_dir = out_dir / "runs" / (variant.name + "_seed" + std::to_string(seed));
      train(ds, variant.config, state, opts);
      const EvalResult r = evaluate(state.params, ds);
      rows.push_back({variant.name, seed, r.auc, r.ap});
      f << variant.name << ',' << seed << ',' << fmt_double(r.auc) << ',' << fmt_double(r.ap) << '\n';
      f.flush();
      if (progress) progress(variant.name + " seed=" + std::to_string(seed) + " " + eval_summary(r));
    }
  }
  if (!f) throw IoError("failed writing ablation.csv");
  return rows;
}

SuiteReport run_gradcheck(const RunConfig& config, bool inject_faulty_op, const std::optional<fs::path>& out_dir,
                          const LineSink& progress) {
  config.validate();
  std::ofstream report_file;
  if (out_dir) {
    ensure_dir(*out_dir);
    report_file = open_out(*out_dir / "gradcheck.txt");
  }
  SuiteOptions opts;
  opts.seeds = config.gradcheck.seeds;
  opts.check.step = config.gradcheck.step;
  opts.check.tolerance = config.gradcheck.tolerance;
  opts.inject_faulty_op = inject_faulty_op;
  opts.on_entry = [&](const SuiteEntry& e) {
    const std::string line = format_suite_entry(e);
    if (report_file.is_open()) report_file << line << '\n';
    if (progress) progress(line);
  };
  SuiteReport report = run_gradcheck_suite(opts);
  if (out_dir) {
    report_file << (report.passed ? "PASS" : "FAIL") << '\n';
    write_run_json(*out_dir, "gradcheck",
                   {{"config", to_json(config)}, {"inject_faulty_op", inject_faulty_op}, {"passed", report.passed}});
  }
  return report;
}

}  // namespace wvad
