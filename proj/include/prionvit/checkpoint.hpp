#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "prionvit/model.hpp"
#include "prionvit/rng.hpp"

namespace prionvit::model {

// Unknown keys are rejected; missing keys keep their defaults.
nlohmann::json config_to_json(const PrionViTConfig& config);
PrionViTConfig config_from_json(const nlohmann::json& j);

struct OptimizerMoments {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

struct Checkpoint {
  PrionViTConfig config;
  TargetScaling scaling;
  Parameters params;
  MemoryState memory;
  OptimizerMoments optimizer;
  std::uint64_t epoch = 0;
  Rng rng;
  // Free-form provenance (training config, seed, best validation score).
  nlohmann::json meta = nlohmann::json::object();
};

// Binary container: "PVCK", u32 version, length-prefixed JSON header, then
// named tensors with raw little-endian doubles. Round trips are bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prionvit::model
