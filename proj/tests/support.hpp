#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "json.hpp"
#include "prionvit/harness.hpp"

namespace support {

namespace fs = std::filesystem;
using nlohmann::json;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("prionvit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Tiny model on a coarse 32 px temperature grid.
inline prionvit::harness::ExperimentConfig tiny_experiment(const fs::path& data_dir) {
  prionvit::harness::ExperimentConfig c;
  c.model = prionvit::model::PrionViTConfig::tiny();
  c.model.dropout_rate = 0.1;
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.train.seed = 5;
  c.data.dir = data_dir.string();
  c.data.t_min = 0.0;
  c.data.t_max = 9.5;
  c.data.step = 0.5;
  c.data.modes.width = 32;
  c.data.modes.height = 32;
  c.data.modes.mode_count = 12;
  c.augment = prionvit::pipeline::AugmentConfig::identity();
  return c;
}

inline bool is_hash(const json& j) {
  if (!j.is_string()) return false;
  const auto s = j.get<std::string>();
  return s.size() == 16 && s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

// Every failed check appends a message; empty result means valid.
inline std::vector<std::string> check_metrics_schema(const json& j) {
  std::vector<std::string> err;
  for (const char* k : {"mse", "mae", "rmse", "max_error"})
    if (!j.contains(k) || !j[k].is_number()) err.push_back(std::string("metrics.") + k);
  if (!j.contains("r2") || !(j["r2"].is_number() || j["r2"].is_null())) err.push_back("metrics.r2");
  if (!j.contains("count") || !j["count"].is_number_unsigned()) err.push_back("metrics.count");
  if (!j.contains("config_hash") || !is_hash(j["config_hash"])) err.push_back("metrics.config_hash");
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) err.push_back("metrics.seed");
  if (err.empty() && std::abs(j["rmse"].get<double>() * j["rmse"].get<double>() - j["mse"].get<double>()) > 1e-9)
    err.push_back("metrics: rmse^2 != mse");
  return err;
}

inline std::vector<std::string> check_bench_report_schema(const json& j) {
  std::vector<std::string> err;
  if (!j.contains("label") || !j["label"].is_string()) err.push_back("bench.label");
  for (const char* k : {"peak_memory_mb", "mean_latency_s", "min_latency_s", "max_latency_s"})
    if (!j.contains(k) || !j[k].is_number()) err.push_back(std::string("bench.") + k);
  if (j.contains("mean_latency_s") && j["mean_latency_s"].is_number() && !(j["mean_latency_s"].get<double>() > 0.0))
    err.push_back("bench.mean_latency_s > 0");
  if (!j.contains("n_runs") || !j["n_runs"].is_number_unsigned() || j["n_runs"].get<std::size_t>() < 1)
    err.push_back("bench.n_runs");
  if (!j.contains("warmup") || !j["warmup"].is_number_unsigned()) err.push_back("bench.warmup");
  if (!j.contains("input_shape") || !j["input_shape"].is_array()) err.push_back("bench.input_shape");
  if (!j.contains("config_hash") || !is_hash(j["config_hash"])) err.push_back("bench.config_hash");
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) err.push_back("bench.seed");
  return err;
}

inline std::vector<std::string> check_bench_document_schema(const json& j) {
  std::vector<std::string> err;
  if (!j.contains("config_hash") || !is_hash(j["config_hash"])) err.push_back("bench.json config_hash");
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) err.push_back("bench.json seed");
  if (!j.contains("reports") || !j["reports"].is_array() || j["reports"].empty()) {
    err.push_back("bench.json reports");
    return err;
  }
  for (const auto& r : j["reports"])
    for (auto& e : check_bench_report_schema(r)) err.push_back(e);
  return err;
}

inline std::vector<std::string> check_ablation_document_schema(const json& j) {
  std::vector<std::string> err;
  if (!j.contains("config_hash") || !is_hash(j["config_hash"])) err.push_back("ablation config_hash");
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) err.push_back("ablation seed");
  if (!j.contains("runs") || !j["runs"].is_array() || j["runs"].empty()) {
    err.push_back("ablation runs");
    return err;
  }
  for (const auto& run : j["runs"]) {
    if (!run.contains("seed") || !run["seed"].is_number_unsigned()) err.push_back("run.seed");
    if (!run.contains("config_hash") || !is_hash(run["config_hash"])) err.push_back("run.config_hash");
    if (!run.contains("variants")) {
      err.push_back("run.variants");
      continue;
    }
    std::string split_hash;
    for (const char* v : {"prion-vit", "plain-vit"}) {
      if (!run["variants"].contains(v)) {
        err.push_back(std::string("run.variants.") + v);
        continue;
      }
      const auto& var = run["variants"][v];
      for (const char* s : {"test", "val"})
        if (var.contains(s))
          for (auto& e : check_metrics_schema(var[s])) err.push_back(std::string(v) + "." + s + ": " + e);
        else
          err.push_back(std::string(v) + "." + s);
      if (!var.contains("split_hash") || !var["split_hash"].is_string()) {
        err.push_back(std::string(v) + ".split_hash");
      } else if (split_hash.empty()) {
        split_hash = var["split_hash"];
      } else if (split_hash != var["split_hash"]) {
        err.push_back("variants saw different splits");
      }
    }
    if (!run.contains("delta_prion_minus_plain") || !run["delta_prion_minus_plain"].contains("mae"))
      err.push_back("run.delta_prion_minus_plain");
  }
  return err;
}

}  // namespace support
