#include "prionvit/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "prionvit/ops.hpp"

namespace prionvit::training {

namespace {

enum StreamTag : std::uint64_t { kBatchStream = 0xBA7C, kAugmentStream = 0xA06, kDropoutStream = 0xD20 };

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train config: learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("train config: Adam betas must be in [0, 1) and epsilon positive");
  }
  if (eval_batch_size < 1) throw std::invalid_argument("train config: eval_batch_size must be at least 1");
}

Var mse_loss(Var predictions, Var targets) {
  if (predictions.shape() != targets.shape()) {
    throw ShapeError("mse_loss: predictions " + shape_str(predictions.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  Var diff = sub(predictions, targets);
  return mean_all(mul(diff, diff));
}

double mse_loss(const Tensor& predictions, const Tensor& targets) {
  Tape tape;
  tape.set_grad_enabled(false);
  return mse_loss(tape.constant(predictions), tape.constant(targets)).value().item();
}

void adam_step(std::span<const std::pair<std::string, Tensor*>> params, std::span<const Tensor* const> grads,
               model::OptimizerMoments& moments, const AdamConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->shape() != params[i].second->shape()) {
      throw ShapeError("adam_step: gradient for " + params[i].first + " has shape " + shape_str(grads[i]->shape()));
    }
    if (!grads[i]->all_finite()) {
      throw NonFiniteGradient("non-finite gradient for parameter '" + params[i].first + "' at optimizer step " +
                              std::to_string(moments.step + 1));
    }
  }
  if (moments.first.empty()) {
    for (const auto& [name, t] : params) {
      moments.first.emplace_back(t->shape(), 0.0);
      moments.second.emplace_back(t->shape(), 0.0);
    }
  }
  if (moments.first.size() != params.size()) throw std::invalid_argument("adam_step: moments do not match parameters");

  ++moments.step;
  const double t = static_cast<double>(moments.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].second;
    const Tensor& g = *grads[i];
    Tensor& m = moments.first[i];
    Tensor& v = moments.second[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

Evaluation evaluate(const model::PrionViT& model, const model::MemoryState& state, const pipeline::Dataset& data,
                    std::span<const std::size_t> indices, const std::string& split_name, std::size_t batch_size) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  model::MemoryState working = state;
  Evaluation out;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const Tensor preds = model::predict(model, pipeline::stack_images(data.samples, chunk), working);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.predictions.push_back(preds[i]);
      out.targets.push_back(data.samples.at(chunk[i]).label);
    }
  }
  out.report = compute_metrics(out.predictions, out.targets);
  out.report.split = split_name;
  return out;
}

TrainResult train(model::PrionViT initial, const pipeline::Dataset& data, const pipeline::Split& split,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  options.augment.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");

  model::PrionViT net = std::move(initial);
  if (config.standardize_targets) {
    double mean = 0.0;
    for (std::size_t i : split.train) mean += data.samples.at(i).label;
    mean /= static_cast<double>(split.train.size());
    double var = 0.0;
    for (std::size_t i : split.train) var += (data.samples[i].label - mean) * (data.samples[i].label - mean);
    var /= static_cast<double>(split.train.size());
    net.set_scaling({mean, var > 0.0 ? std::sqrt(var) : 1.0});
  }

  // Memory starts from zeros once per training run and persists across batches and epochs.
  model::MemoryState memory = model::MemoryState::zeros(net.config());
  model::OptimizerMoments moments;
  const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.epsilon};

  TrainResult result{net, memory, {}};
  double best_mae = std::numeric_limits<double>::infinity();

  auto make_checkpoint = [&](std::size_t epoch) {
    model::Checkpoint ck;
    ck.config = net.config();
    ck.scaling = net.scaling();
    ck.params = net.params();
    ck.memory = memory;
    ck.optimizer = moments;
    ck.epoch = epoch;
    ck.rng = Rng::derive(config.seed, {kBatchStream, epoch + 1});
    ck.meta = {{"seed", config.seed}, {"config_hash", options.config_hash}};
    return ck;
  };
  auto save = [&](const std::string& name, std::size_t epoch) {
    if (!options.checkpoint_dir) return;
    std::filesystem::create_directories(*options.checkpoint_dir);
    model::save_checkpoint(*options.checkpoint_dir / name, make_checkpoint(epoch));
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng batch_rng = Rng::derive(config.seed, {kBatchStream, epoch});
    const auto batches = pipeline::make_batches(split.train, config.batch_size, batch_rng, false);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      std::vector<pipeline::Sample> augmented;
      augmented.reserve(batch.size());
      for (std::size_t idx : batch) {
        Rng aug_rng = Rng::derive(config.seed, {kAugmentStream, epoch, idx});
        augmented.push_back(pipeline::augment(data.samples.at(idx), options.augment, aug_rng));
      }
      std::vector<std::size_t> local(batch.size());
      for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
      const Tensor images = pipeline::stack_images(augmented, local);
      const Tensor targets = pipeline::stack_labels(augmented, local);

      Rng dropout_rng = Rng::derive(config.seed, {kDropoutStream, epoch, bi});
      Tape tape;
      model::MemoryState next = memory;
      auto fwd = model::forward(tape, net, images, next, model::Mode::Train, &dropout_rng, true);
      Var loss = mse_loss(fwd.predictions, tape.constant(targets));
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        save("checkpoint_last_good.bin", epoch - 1);
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(bi));
      }
      const Gradients grads = tape.backward(loss);
      auto named = net.params().named();
      std::vector<const Tensor*> grad_ptrs;
      grad_ptrs.reserve(named.size());
      for (Var v : fwd.params.all) grad_ptrs.push_back(&grads[v]);
      try {
        adam_step(named, grad_ptrs, moments, adam);
      } catch (const NonFiniteGradient&) {
        save("checkpoint_last_good.bin", epoch - 1);
        throw;
      }
      memory = std::move(next);
      loss_sum += loss_value * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(seen);
    if (!split.val.empty()) {
      record.validation = evaluate(net, memory, data, split.val, "val", config.eval_batch_size).report;
      record.validation.config_hash = options.config_hash;
      record.validation.seed = config.seed;
    }
    record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const double score = split.val.empty() ? record.train_loss : record.validation.mae;
    if (score < best_mae) {
      best_mae = score;
      result.model = net;
      result.memory = memory;
      result.history.best_epoch = epoch;
    }
    result.history.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
    if (config.checkpoint_every && epoch % config.checkpoint_every == 0) {
      save("checkpoint_epoch" + std::to_string(epoch) + ".bin", epoch);
    }
  }
  save("checkpoint_last.bin", config.epochs);
  return result;
}

}  // namespace prionvit::training
