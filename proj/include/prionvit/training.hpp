#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prionvit/checkpoint.hpp"
#include "prionvit/model.hpp"
#include "prionvit/pipeline.hpp"

namespace prionvit::training {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Write a checkpoint every N epochs (0 disables periodic checkpoints).
  std::size_t checkpoint_every = 0;
  std::size_t eval_batch_size = 64;
  // Fit TargetScaling to the training labels before the first epoch.
  bool standardize_targets = true;

  void validate() const;
};

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double max_error = 0.0;
  std::optional<double> r2;  // empty when the targets are constant
  std::size_t count = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string split;
};

MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> targets);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  MetricsReport validation;
  double wall_time_s = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  // Bitwise equality of every deterministic field (wall time excluded).
  bool same_trajectory(const TrainHistory& other) const;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Var mse_loss(Var predictions, Var targets);
double mse_loss(const Tensor& predictions, const Tensor& targets);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update. Moments are created on first use. Throws
// NonFiniteGradient naming the offending parameter before touching anything.
void adam_step(std::span<const std::pair<std::string, Tensor*>> params, std::span<const Tensor* const> grads,
               model::OptimizerMoments& moments, const AdamConfig& config);

struct TrainResult {
  model::PrionViT model;
  model::MemoryState memory;
  TrainHistory history;
};

struct TrainOptions {
  pipeline::AugmentConfig augment;
  // Checkpoint directory; periodic and last-good checkpoints go here.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochRecord&)> on_epoch;
  std::string config_hash;
};

// Trains `initial` on split.train, validating on split.val after each epoch.
// Returns the parameters and memory snapshot from the epoch with the lowest
// validation MAE.
TrainResult train(model::PrionViT initial, const pipeline::Dataset& data, const pipeline::Split& split,
                  const TrainConfig& config, const TrainOptions& options = {});

struct Evaluation {
  MetricsReport report;
  std::vector<double> predictions;
  std::vector<double> targets;
};

// Eval mode, dropout off. With frozen inference memory the result does not
// depend on the order of `indices`.
Evaluation evaluate(const model::PrionViT& model, const model::MemoryState& state, const pipeline::Dataset& data,
                    std::span<const std::size_t> indices, const std::string& split_name,
                    std::size_t batch_size = 64);

}  // namespace prionvit::training
