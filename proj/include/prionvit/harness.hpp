#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prionvit/grad_check.hpp"
#include "prionvit/model.hpp"
#include "prionvit/pipeline.hpp"
#include "prionvit/specklegen.hpp"
#include "prionvit/training.hpp"

namespace prionvit::harness {

struct DataConfig {
  // Dataset directory holding manifest.csv. Empty means <out-dir>/data.
  std::string dir;
  // Render the synthetic dataset when the manifest is missing.
  bool generate = true;
  double t_min = 0.0;
  double t_max = 120.0;
  double step = 0.2;
  speckle::ModeSetParams modes;
  double train_frac = 0.7;
  double test_frac = 0.2;
  double val_frac = 0.1;
  // Split seed; absent means the experiment seed.
  std::optional<std::uint64_t> split_seed;
  bool cache = true;
};

struct ExperimentConfig {
  model::PrionViTConfig model;
  training::TrainConfig train;
  DataConfig data;
  pipeline::AugmentConfig augment;

  std::uint64_t seed() const { return train.seed; }
  pipeline::SplitSpec split_spec() const;
};

// Strict parse: unknown keys anywhere raise std::invalid_argument naming the
// dotted key path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// PRION_VIT_SEED, then an explicit override, replace train.seed.
void apply_seed_overrides(ExperimentConfig& config, std::optional<std::uint64_t> cli_seed);

// FNV-1a 64 over the canonical (sorted-key, compact) JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
std::string fnv1a_hex(std::string_view bytes);
std::string split_hash(const pipeline::Split& split);

// Resolves the dataset directory, generating it if allowed and missing.
speckle::Manifest prepare_manifest(const ExperimentConfig& config, const std::filesystem::path& out_dir);
pipeline::Dataset prepare_dataset(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Reports. JSON keys are emitted in sorted order.
nlohmann::json to_json(const training::MetricsReport& report);
nlohmann::json to_json(const training::TrainHistory& history);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_history_csv(const std::filesystem::path& path, const training::TrainHistory& history);

inline constexpr const char* kScatterCsv = "scatter.csv";
inline constexpr const char* kScatterSvg = "scatter.svg";
// Writes scatter.csv and scatter.svg into out_dir.
void emit_scatter(std::span<const double> predictions, std::span<const double> targets,
                  const std::filesystem::path& out_dir);
std::string scatter_svg(std::span<const double> predictions, std::span<const double> targets);

struct VariantResult {
  std::string label;
  training::MetricsReport test;
  training::MetricsReport val;
  training::TrainHistory history;
  std::size_t parameter_count = 0;
  std::string split_hash;
};

struct AblationReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  VariantResult prion;
  VariantResult plain;

  double mae_delta() const { return prion.test.mae - plain.test.mae; }
};

struct AblationOptions {
  bool parallel = false;
  std::optional<std::filesystem::path> checkpoint_dir;
};

// Trains the prion and plain variants from the same seed on the same split.
AblationReport run_ablation(const ExperimentConfig& config, const pipeline::Dataset& data,
                            const AblationOptions& options = {});

nlohmann::json to_json(const AblationReport& report);
// Multi-seed document written as ablation.json.
nlohmann::json ablation_document(std::span<const AblationReport> reports);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_seconds() = 0;
};

class SteadyClock final : public Clock {
 public:
  double now_seconds() override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  }
};

struct BenchReport {
  std::string label;
  double peak_memory_mb = 0.0;
  double mean_latency_s = 0.0;
  double min_latency_s = 0.0;
  double max_latency_s = 0.0;
  std::size_t n_runs = 0;
  std::size_t warmup = 0;
  Shape input_shape;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// Resident-set high-water mark in MB, or 0 where unavailable.
double peak_rss_mb();

// Single-image eval-mode forward timed n_runs times after `warmup` discarded
// runs. The memory snapshot is never written.
BenchReport bench_inference(const model::PrionViT& model, const model::MemoryState& state, const Tensor& image,
                            std::size_t n_runs, std::size_t warmup, Clock& clock);

nlohmann::json to_json(const BenchReport& report);

struct GradCheckRun {
  model::MemoryMode mode;
  GradCheckReport report;
};

// Loss gradient of a randomly perturbed model on a random batch, checked
// against central differences for every parameter group.
GradCheckReport run_gradcheck(const model::PrionViTConfig& config, std::uint64_t seed,
                              const GradCheckOptions& options, std::size_t batch = 2);

nlohmann::json to_json(const GradCheckReport& report);

// Full CLI. Returns the process exit code.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace prionvit::harness
