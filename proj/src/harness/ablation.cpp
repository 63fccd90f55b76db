#include <future>

#include "prionvit/harness.hpp"

namespace prionvit::harness {

using nlohmann::json;

namespace {

VariantResult train_variant(const std::string& label, const ExperimentConfig& config, const pipeline::Dataset& data,
                            const pipeline::Split& split, const std::string& hash,
                            const std::optional<std::filesystem::path>& checkpoint_dir) {
  model::PrionViT net(config.model, config.seed());
  training::TrainOptions options;
  options.augment = config.augment;
  options.config_hash = hash;
  if (checkpoint_dir) options.checkpoint_dir = *checkpoint_dir / label;
  auto trained = training::train(std::move(net), data, split, config.train, options);

  VariantResult out;
  out.label = label;
  out.history = std::move(trained.history);
  out.parameter_count = trained.model.parameter_count();
  out.split_hash = split_hash(split);
  out.test = training::evaluate(trained.model, trained.memory, data, split.test, "test", config.train.eval_batch_size)
                 .report;
  if (!split.val.empty()) {
    out.val = training::evaluate(trained.model, trained.memory, data, split.val, "val", config.train.eval_batch_size)
                  .report;
  }
  for (auto* r : {&out.test, &out.val}) {
    r->config_hash = hash;
    r->seed = config.seed();
  }
  return out;
}

}  // namespace

AblationReport run_ablation(const ExperimentConfig& config, const pipeline::Dataset& data,
                            const AblationOptions& options) {
  if (data.size() == 0) throw std::invalid_argument("run_ablation: empty dataset");
  const pipeline::Split split = pipeline::split_dataset(data.size(), config.split_spec());
  if (split.test.empty()) throw std::invalid_argument("run_ablation: empty test split");

  ExperimentConfig prion_cfg = config;
  prion_cfg.model.memory_enabled = true;
  ExperimentConfig plain_cfg = config;
  plain_cfg.model.memory_enabled = false;

  AblationReport report;
  report.seed = config.seed();
  report.config_hash = config_hash(config);
  if (options.parallel) {
    auto plain = std::async(std::launch::async, [&] {
      return train_variant("plain-vit", plain_cfg, data, split, report.config_hash, options.checkpoint_dir);
    });
    report.prion = train_variant("prion-vit", prion_cfg, data, split, report.config_hash, options.checkpoint_dir);
    report.plain = plain.get();
  } else {
    report.prion = train_variant("prion-vit", prion_cfg, data, split, report.config_hash, options.checkpoint_dir);
    report.plain = train_variant("plain-vit", plain_cfg, data, split, report.config_hash, options.checkpoint_dir);
  }
  return report;
}

json to_json(const AblationReport& r) {
  auto variant = [](const VariantResult& v) {
    return json{{"label", v.label},
                {"test", to_json(v.test)},
                {"val", to_json(v.val)},
                {"best_epoch", v.history.best_epoch},
                {"epochs", v.history.epochs.size()},
                {"parameter_count", v.parameter_count},
                {"split_hash", v.split_hash}};
  };
  auto delta = [](std::optional<double> a, std::optional<double> b) {
    return a && b ? json(*a - *b) : json(nullptr);
  };
  return json{{"seed", r.seed},
              {"config_hash", r.config_hash},
              {"variants", {{"prion-vit", variant(r.prion)}, {"plain-vit", variant(r.plain)}}},
              {"delta_prion_minus_plain",
               {{"mae", r.prion.test.mae - r.plain.test.mae},
                {"mse", r.prion.test.mse - r.plain.test.mse},
                {"rmse", r.prion.test.rmse - r.plain.test.rmse},
                {"max_error", r.prion.test.max_error - r.plain.test.max_error},
                {"r2", delta(r.prion.test.r2, r.plain.test.r2)}}}};
}

json ablation_document(std::span<const AblationReport> reports) {
  if (reports.empty()) throw std::invalid_argument("ablation_document: no runs");
  json runs = json::array();
  std::size_t wins = 0;
  for (const auto& r : reports) {
    runs.push_back(to_json(r));
    if (r.prion.test.mae <= r.plain.test.mae) ++wins;
  }
  return json{{"config_hash", reports.front().config_hash},
              {"seed", reports.front().seed},
              {"seeds", [&] {
                 json s = json::array();
                 for (const auto& r : reports) s.push_back(r.seed);
                 return s;
               }()},
              {"runs", runs},
              {"prion_mae_le_plain_count", wins},
              {"reference", {{"metric", "test MAE (C)"}, {"prion-vit", 0.52}, {"plain-vit", 1.15}}}};
}

}  // namespace prionvit::harness
