#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "error.hpp"

namespace wvad {
namespace fs = std::filesystem;

namespace {
constexpr std::uint32_t kOptimizerVersion = 1;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& c) {
  if (params.size() != grads.size()) throw ArgumentError("adam_step: one gradient per parameter");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params[i])) throw DimensionError("adam_step: gradient shape mismatch");
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient for parameter " + std::to_string(i));
  }
  if (state.first.empty()) {
    for (Tensor* p : params) {
      state.first.emplace_back(p->shape(), 0.0);
      state.second.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw ArgumentError("adam_step: moment count mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p[j]);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_normal < 1 || batch_abnormal < 1) throw ConfigError("batches need at least one video of each class");
  if (!(adam.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (adam.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0,1)");
  if (!(adam.eps > 0.0)) throw ConfigError("Adam eps must be positive");
  encoder.validate();
  loss.validate();
  mining.validate(encoder.snippets);
  if (loss.k > encoder.snippets) throw ConfigError("loss k exceeds the snippet count");
}

BatchSampler::BatchSampler(std::vector<std::size_t> normal, std::vector<std::size_t> abnormal,
                           std::size_t batch_normal, std::size_t batch_abnormal) {
  if (batch_normal < 1 || batch_abnormal < 1) throw ConfigError("batches need at least one video of each class");
  if (normal.size() < batch_normal || abnormal.size() < batch_abnormal)
    throw ConfigError("dataset has " + std::to_string(normal.size()) + " normal and " +
                      std::to_string(abnormal.size()) + " abnormal training videos, batch needs " +
                      std::to_string(batch_normal) + "/" + std::to_string(batch_abnormal));
  normal_.pool = std::move(normal);
  normal_.per_batch = batch_normal;
  abnormal_.pool = std::move(abnormal);
  abnormal_.per_batch = batch_abnormal;
}

std::size_t BatchSampler::steps_per_epoch() const {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  return std::max(ceil_div(normal_.pool.size(), normal_.per_batch), ceil_div(abnormal_.pool.size(), abnormal_.per_batch));
}

void BatchSampler::start_epoch(std::mt19937_64&) {
  normal_.queue.clear();
  abnormal_.queue.clear();
}

std::vector<std::size_t> BatchSampler::draw(ClassQueue& q, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  while (out.size() < q.per_batch) {
    if (q.queue.empty()) {
      std::vector<std::size_t> fresh = q.pool;
      std::shuffle(fresh.begin(), fresh.end(), rng);
      std::stable_partition(fresh.begin(), fresh.end(),
                            [&](std::size_t v) { return std::find(out.begin(), out.end(), v) == out.end(); });
      // queue is consumed from the back
      q.queue.assign(fresh.rbegin(), fresh.rend());
    }
    out.push_back(q.queue.back());
    q.queue.pop_back();
  }
  return out;
}

Batch BatchSampler::next(std::mt19937_64& rng) {
  Batch b;
  b.normal = draw(normal_, rng);
  b.abnormal = draw(abnormal_, rng);
  return b;
}

Batch sample_batch(const Dataset& dataset, std::mt19937_64& rng, std::size_t batch_normal, std::size_t batch_abnormal) {
  std::vector<std::size_t> normal, abnormal;
  for (std::size_t i = 0; i < dataset.videos.size(); ++i) {
    const auto& r = dataset.videos[i].record;
    if (r.split != Split::Train) continue;
    (r.video_label == 1 ? abnormal : normal).push_back(i);
  }
  BatchSampler sampler(std::move(normal), std::move(abnormal), batch_normal, batch_abnormal);
  sampler.start_epoch(rng);
  return sampler.next(rng);
}

TrainState initial_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.params = init_params(config.encoder, config.seed);
  s.rng.seed(config.seed ^ 0x5eedf00dull);
  return s;
}

std::string log_header() { return "step,epoch,l_total,l_snp,l_vid,l_reg,l_cnt,n_hard_abnormal,n_hard_normal"; }

std::string format_log_row(const LogRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu",
                static_cast<unsigned long long>(r.step), static_cast<unsigned long long>(r.epoch), r.loss.total,
                r.loss.snippet, r.loss.video, r.loss.regularisation, r.loss.contrastive, r.hard_abnormal,
                r.hard_normal);
  return buf;
}

LogRow train_step(std::span<const Video* const> batch, const TrainConfig& config, TrainState& state,
                  std::uint64_t epoch) {
  Tape tape;
  Forward fwd(tape, state.params);
  std::mt19937_64* dropout_rng = config.encoder.dropout_rate > 0.0 ? &state.rng : nullptr;
  std::vector<VideoOutput> outputs;
  outputs.reserve(batch.size());
  for (const Video* v : batch) {
    EncodedVideo enc = fwd.encode(v->features, dropout_rng);
    outputs.push_back({fwd.snippet_scores(enc), fwd.video_score(enc), enc.snippet_features, v->record.video_label});
  }

  MinedSets mined;
  if (config.loss.weights.contrastive > 0.0 && epoch >= config.mining_warmup_epochs) {
    std::vector<std::vector<double>> detached;
    std::vector<int> labels;
    for (const auto& o : outputs) {
      detached.emplace_back(o.snippet_scores.value().values());
      labels.push_back(o.label);
    }
    mined = mine_batch(detached, labels, config.mining);
  }

  LossTerms terms = loss_total(tape, outputs, mined, config.loss);
  LogRow row;
  row.step = state.step;
  row.epoch = epoch;
  row.loss = terms.values();
  row.hard_abnormal = mined.hard_abnormal.size();
  row.hard_normal = mined.hard_normal.size();
  if (!std::isfinite(row.loss.total))
    throw NumericError("non-finite loss at step " + std::to_string(state.step) + " (epoch " + std::to_string(epoch) +
                       "): " + format_log_row(row));

  std::vector<Tensor> grads;
  std::vector<Tensor*> params;
  if (terms.total.requires_grad()) tape.backward(terms.total);
  const auto& leaves = fwd.leaves();
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Tensor& g = leaves[i].grad();
    grads.push_back(g.empty() ? Tensor(leaves[i].shape(), 0.0) : g);
    params.push_back(&state.params.entries[i].value);
  }
  try {
    adam_step(params, grads, state.optimizer, config.adam);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at step " + std::to_string(state.step));
  }
  round_to_f32(state.params);
  if (!state.params.all_finite())
    throw NumericError("parameters became non-finite at step " + std::to_string(state.step));
  state.step += 1;
  return row;
}

std::vector<LogRow> train(const Dataset& dataset, const TrainConfig& config, TrainState& state,
                          const TrainOptions& options) {
  config.validate();
  if (dataset.feature_dim != config.encoder.input_dim || dataset.snippets != config.encoder.snippets)
    throw ConfigError("dataset is " + std::to_string(dataset.snippets) + "x" + std::to_string(dataset.feature_dim) +
                      " but the encoder expects " + std::to_string(config.encoder.snippets) + "x" +
                      std::to_string(config.encoder.input_dim));
  if (!(state.params.config == config.encoder)) throw ConfigError("checkpoint was written for a different encoder");

  std::vector<std::size_t> normal, abnormal;
  for (std::size_t i = 0; i < dataset.videos.size(); ++i) {
    const auto& r = dataset.videos[i].record;
    if (r.split != Split::Train) continue;
    (r.video_label == 1 ? abnormal : normal).push_back(i);
  }
  BatchSampler sampler(std::move(normal), std::move(abnormal), config.batch_normal, config.batch_abnormal);

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    const fs::path log_path = options.out_dir / "train_log.csv";
    const bool fresh = state.epochs_completed == 0 || !fs::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open " + log_path.string());
    if (fresh) log << log_header() << '\n';
  }

  std::vector<LogRow> rows;
  for (std::uint64_t epoch = state.epochs_completed; epoch < config.epochs; ++epoch) {
    sampler.start_epoch(state.rng);
    const std::size_t steps = sampler.steps_per_epoch();
    for (std::size_t s = 0; s < steps; ++s) {
      Batch b = sampler.next(state.rng);
      // Abnormal and normal lists are already shuffled, so position i of each
      // forms the i-th ranking pair.
      std::vector<const Video*> videos;
      for (std::size_t i : b.abnormal) videos.push_back(&dataset.videos[i]);
      for (std::size_t i : b.normal) videos.push_back(&dataset.videos[i]);
      LogRow row = train_step(videos, config, state, epoch);
      if (log.is_open()) log << format_log_row(row) << '\n';
      if (options.on_step) options.on_step(row);
      rows.push_back(row);
    }
    state.epochs_completed = epoch + 1;
    if (!options.out_dir.empty()) {
      log.flush();
      save_checkpoint(options.out_dir / "checkpoint.wvck", state);
    }
  }
  // Nothing to run (epochs=0 or already complete): still leave a checkpoint.
  if (rows.empty() && !options.out_dir.empty()) save_checkpoint(options.out_dir / "checkpoint.wvck", state);
  return rows;
}

void save_checkpoint(const fs::path& path, const TrainState& state) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  BinaryWriter w(f);
  write_params(w, state.params);
  w.magic("WVOP");
  w.u32(kOptimizerVersion);
  w.u64(state.step);
  w.u64(state.epochs_completed);
  w.u64(state.optimizer.step);
  std::ostringstream rng;
  rng << state.rng;
  w.bytes(rng.str());
  w.u32(static_cast<std::uint32_t>(state.optimizer.first.size()));
  for (std::size_t i = 0; i < state.optimizer.first.size(); ++i) {
    for (double v : state.optimizer.first[i].data()) w.f64(v);
    for (double v : state.optimizer.second[i].data()) w.f64(v);
  }
  f.flush();
  if (!f) throw IoError("failed writing " + path.string());
}

TrainState load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  BinaryReader r(f);
  TrainState s;
  s.params = read_params(r);
  if (r.at_end()) return s;  // parameters only
  r.expect_magic("WVOP");
  const auto version_at = r.offset();
  if (const auto v = r.u32(); v != kOptimizerVersion)
    throw FormatError("unsupported optimiser section version " + std::to_string(v), version_at);
  s.step = r.u64();
  s.epochs_completed = r.u64();
  s.optimizer.step = r.u64();
  const auto rng_at = r.offset();
  std::istringstream rng(r.bytes());
  rng >> s.rng;
  if (!rng) throw FormatError("corrupt RNG state", rng_at);
  const auto count_at = r.offset();
  const auto n = r.u32();
  if (n != 0 && n != s.params.count()) throw FormatError("moment count does not match parameter count", count_at);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor m(s.params.entries[i].value.shape()), v(s.params.entries[i].value.shape());
    for (double& x : m.data()) x = r.f64();
    for (double& x : v.data()) x = r.f64();
    s.optimizer.first.push_back(std::move(m));
    s.optimizer.second.push_back(std::move(v));
  }
  return s;
}

}  // namespace wvad
