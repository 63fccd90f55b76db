#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "prionvit/checkpoint.hpp"
#include "prionvit/harness.hpp"

namespace prionvit::harness {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + section + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown key '" + section + "." + key + "'");
  }
}

template <class T>
void get(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

training::TrainConfig train_from_json(const json& j) {
  reject_unknown(j, "train",
                 {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "seed", "checkpoint_every",
                  "eval_batch_size", "standardize_targets"});
  training::TrainConfig c;
  get(j, "epochs", c.epochs);
  get(j, "batch_size", c.batch_size);
  get(j, "learning_rate", c.learning_rate);
  get(j, "beta1", c.beta1);
  get(j, "beta2", c.beta2);
  get(j, "epsilon", c.epsilon);
  get(j, "seed", c.seed);
  get(j, "checkpoint_every", c.checkpoint_every);
  get(j, "eval_batch_size", c.eval_batch_size);
  get(j, "standardize_targets", c.standardize_targets);
  c.validate();
  return c;
}

json train_to_json(const training::TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"eval_batch_size", c.eval_batch_size},
              {"standardize_targets", c.standardize_targets}};
}

DataConfig data_from_json(const json& j) {
  reject_unknown(j, "data",
                 {"dir", "generate", "t_min", "t_max", "step", "mode_count", "width", "height", "kappa_min",
                  "kappa_max", "grain_sigma_px", "circular_core", "mode_seed", "train_frac", "test_frac", "val_frac",
                  "split_seed", "cache"});
  DataConfig c;
  get(j, "dir", c.dir);
  get(j, "generate", c.generate);
  get(j, "t_min", c.t_min);
  get(j, "t_max", c.t_max);
  get(j, "step", c.step);
  get(j, "mode_count", c.modes.mode_count);
  get(j, "width", c.modes.width);
  get(j, "height", c.modes.height);
  get(j, "kappa_min", c.modes.kappa_min);
  get(j, "kappa_max", c.modes.kappa_max);
  get(j, "grain_sigma_px", c.modes.grain_sigma_px);
  get(j, "circular_core", c.modes.circular_core);
  get(j, "mode_seed", c.modes.seed);
  get(j, "train_frac", c.train_frac);
  get(j, "test_frac", c.test_frac);
  get(j, "val_frac", c.val_frac);
  if (j.contains("split_seed") && !j.at("split_seed").is_null()) c.split_seed = j.at("split_seed").get<std::uint64_t>();
  get(j, "cache", c.cache);
  return c;
}

json data_to_json(const DataConfig& c) {
  return json{{"dir", c.dir},
              {"generate", c.generate},
              {"t_min", c.t_min},
              {"t_max", c.t_max},
              {"step", c.step},
              {"mode_count", c.modes.mode_count},
              {"width", c.modes.width},
              {"height", c.modes.height},
              {"kappa_min", c.modes.kappa_min},
              {"kappa_max", c.modes.kappa_max},
              {"grain_sigma_px", c.modes.grain_sigma_px},
              {"circular_core", c.modes.circular_core},
              {"mode_seed", c.modes.seed},
              {"train_frac", c.train_frac},
              {"test_frac", c.test_frac},
              {"val_frac", c.val_frac},
              {"split_seed", c.split_seed ? json(*c.split_seed) : json(nullptr)},
              {"cache", c.cache}};
}

pipeline::AugmentConfig augment_from_json(const json& j) {
  reject_unknown(j, "augment",
                 {"enabled", "noise_sigma", "flip_horizontal_prob", "flip_vertical_prob", "brightness_delta",
                  "rotation_deg"});
  pipeline::AugmentConfig c;
  get(j, "enabled", c.enabled);
  get(j, "noise_sigma", c.noise_sigma);
  get(j, "flip_horizontal_prob", c.flip_horizontal_prob);
  get(j, "flip_vertical_prob", c.flip_vertical_prob);
  get(j, "brightness_delta", c.brightness_delta);
  get(j, "rotation_deg", c.rotation_deg);
  c.validate();
  return c;
}

json augment_to_json(const pipeline::AugmentConfig& c) {
  return json{{"enabled", c.enabled},
              {"noise_sigma", c.noise_sigma},
              {"flip_horizontal_prob", c.flip_horizontal_prob},
              {"flip_vertical_prob", c.flip_vertical_prob},
              {"brightness_delta", c.brightness_delta},
              {"rotation_deg", c.rotation_deg}};
}

}  // namespace

pipeline::SplitSpec ExperimentConfig::split_spec() const {
  return {data.train_frac, data.test_frac, data.val_frac, data.split_seed.value_or(train.seed)};
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "config", {"model", "train", "data", "augment"});
  ExperimentConfig c;
  try {
    if (j.contains("model")) c.model = model::config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("data")) c.data = data_from_json(j.at("data"));
    if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.split_spec().validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return json{{"model", model::config_to_json(c.model)},
              {"train", train_to_json(c.train)},
              {"data", data_to_json(c.data)},
              {"augment", augment_to_json(c.augment)}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_seed_overrides(ExperimentConfig& config, std::optional<std::uint64_t> cli_seed) {
  if (const char* env = std::getenv("PRION_VIT_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw std::invalid_argument(std::string("PRION_VIT_SEED is not an integer: ") + env);
    config.train.seed = v;
  }
  if (cli_seed) config.train.seed = *cli_seed;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(config_to_json(config).dump()); }

std::string split_hash(const pipeline::Split& split) {
  return fnv1a_hex(json{{"train", split.train}, {"test", split.test}, {"val", split.val}}.dump());
}

speckle::Manifest prepare_manifest(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const std::filesystem::path dir = config.data.dir.empty() ? out_dir / "data" : std::filesystem::path(config.data.dir);
  if (std::filesystem::exists(dir / speckle::kManifestName)) return speckle::read_manifest(dir);
  if (!config.data.generate) throw std::runtime_error("no dataset manifest in " + dir.string());
  const auto modes = speckle::make_mode_set(config.data.modes);
  return speckle::generate_dataset(modes, config.data.t_min, config.data.t_max, config.data.step, dir);
}

pipeline::Dataset prepare_dataset(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const speckle::Manifest manifest = prepare_manifest(config, out_dir);
  std::optional<std::filesystem::path> cache;
  if (config.data.cache) cache = manifest.directory / "cache";
  return pipeline::load_dataset(manifest, config.model.input_size, cache);
}

}  // namespace prionvit::harness
