#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "encoder.hpp"
#include "losses.hpp"
#include "mining.hpp"
#include "synthdata.hpp"

namespace wvad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled: p -= lr * wd * p
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  std::vector<Tensor> first, second;
  std::uint64_t step = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update with decoupled weight decay. Moments are
// created on the first call. Throws NumericError on a non-finite gradient.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t epochs = 50;
  AdamConfig adam;
  std::size_t batch_normal = 16;
  std::size_t batch_abnormal = 16;
  std::uint64_t seed = 0;
  std::size_t mining_warmup_epochs = 2;  // epochs trained before the contrastive term switches on
  EncoderConfig encoder;
  LossConfig loss;
  MiningConfig mining;

  void validate() const;
};

struct Batch {
  std::vector<std::size_t> normal, abnormal;  // indices into the candidate lists' owner
};

// Draws class-balanced batches without replacement. Each class keeps its own
// shuffled queue; an exhausted queue is refilled with a fresh permutation that
// puts videos already in the current batch last.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> normal, std::vector<std::size_t> abnormal, std::size_t batch_normal,
               std::size_t batch_abnormal);

  // Passes needed so the larger class (relative to its batch share) is seen once.
  std::size_t steps_per_epoch() const;
  void start_epoch(std::mt19937_64& rng);
  Batch next(std::mt19937_64& rng);

 private:
  struct ClassQueue {
    std::vector<std::size_t> pool, queue;
    std::size_t per_batch = 0;
  };
  static std::vector<std::size_t> draw(ClassQueue& q, std::mt19937_64& rng);
  ClassQueue normal_, abnormal_;
};

// One batch from the training split of `dataset` (indices into dataset.videos).
Batch sample_batch(const Dataset& dataset, std::mt19937_64& rng, std::size_t batch_normal, std::size_t batch_abnormal);

struct TrainState {
  ModelParams params;
  AdamState optimizer;
  std::uint64_t step = 0;
  std::uint64_t epochs_completed = 0;
  std::mt19937_64 rng;
};

TrainState initial_state(const TrainConfig& config);

struct LogRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  LossBreakdown loss;
  std::size_t hard_abnormal = 0;
  std::size_t hard_normal = 0;
};

std::string log_header();
std::string format_log_row(const LogRow& row);

struct TrainOptions {
  // When set, train_log.csv is appended per step and checkpoint.wvck is
  // rewritten at every epoch end.
  std::filesystem::path out_dir;
  std::function<void(const LogRow&)> on_step;
};

// Runs from state.epochs_completed up to config.epochs.
std::vector<LogRow> train(const Dataset& dataset, const TrainConfig& config, TrainState& state,
                          const TrainOptions& options = {});

// Runs one optimisation step on an explicit batch; returns its log row.
LogRow train_step(std::span<const Video* const> batch, const TrainConfig& config, TrainState& state,
                  std::uint64_t epoch);

// Full checkpoint: the WVCK parameter section followed by a "WVOP" section with
// step, epoch count, RNG state and f64 Adam moments.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace wvad
