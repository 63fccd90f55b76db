#include "prionvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace prionvit::model {

using nlohmann::json;

json config_to_json(const PrionViTConfig& c) {
  return json{{"input_size", c.input_size},
              {"patch_size", c.patch_size},
              {"channels", c.channels},
              {"embed_dim", c.embed_dim},
              {"num_blocks", c.num_blocks},
              {"num_heads", c.num_heads},
              {"ffn_dim", c.ffn_dim},
              {"head_hidden", c.head_hidden},
              {"dropout_rate", c.dropout_rate},
              {"layer_norm_eps", c.layer_norm_eps},
              {"init_std", c.init_std},
              {"memory_enabled", c.memory_enabled},
              {"memory_mode", to_string(c.memory_mode)},
              {"memory_persistence", to_string(c.memory_persistence)},
              {"inference_memory", to_string(c.inference_memory)}};
}

PrionViTConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  PrionViTConfig c;
  static const std::set<std::string> known{"input_size", "patch_size",     "channels",    "embed_dim",
                                           "num_blocks", "num_heads",      "ffn_dim",     "head_hidden",
                                           "dropout_rate", "layer_norm_eps", "init_std",  "memory_enabled",
                                           "memory_mode", "memory_persistence", "inference_memory"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown key 'model." + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("input_size", c.input_size);
  get("patch_size", c.patch_size);
  get("channels", c.channels);
  get("embed_dim", c.embed_dim);
  get("num_blocks", c.num_blocks);
  get("num_heads", c.num_heads);
  get("ffn_dim", c.ffn_dim);
  get("head_hidden", c.head_hidden);
  get("dropout_rate", c.dropout_rate);
  get("layer_norm_eps", c.layer_norm_eps);
  get("init_std", c.init_std);
  get("memory_enabled", c.memory_enabled);
  if (j.contains("memory_mode")) c.memory_mode = parse_memory_mode(j.at("memory_mode").get<std::string>());
  if (j.contains("memory_persistence")) {
    c.memory_persistence = parse_memory_persistence(j.at("memory_persistence").get<std::string>());
  }
  if (j.contains("inference_memory")) {
    c.inference_memory = parse_inference_memory(j.at("inference_memory").get<std::string>());
  }
  c.validate();
  return c;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw std::runtime_error("cannot write checkpoint " + path.string());
  }
  template <class T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Tensor& t) {
    bytes(name);
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) pod<std::uint64_t>(e);
    out_.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("error writing checkpoint " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open checkpoint " + path.string());
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string bytes() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) fail("implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = bytes();
    const auto rank = pod<std::uint32_t>();
    if (rank == 0 || rank > 8) fail("bad tensor rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = pod<std::uint64_t>();
    Tensor t(shape);
    in_.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    check();
    return {std::move(name), std::move(t)};
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("checkpoint " + path_.string() + ": " + msg);
  }

 private:
  void check() {
    if (!in_) fail("truncated file");
  }
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  auto named = ck.params.named();
  if (!ck.optimizer.first.empty() &&
      (ck.optimizer.first.size() != named.size() || ck.optimizer.second.size() != named.size())) {
    throw std::invalid_argument("optimizer moments do not match the parameter list");
  }
  const json header{{"config", config_to_json(ck.config)},
                    {"epoch", ck.epoch},
                    {"optimizer_step", ck.optimizer.step},
                    {"memory_step_count", ck.memory.step_count},
                    {"rng", {{"algorithm", std::string(Rng::kAlgorithm)}, {"seed", ck.rng.seed()}, {"position", ck.rng.position()}}},
                    {"meta", ck.meta}};
  Writer w(path);
  w.pod<char>('P');
  w.pod<char>('V');
  w.pod<char>('C');
  w.pod<char>('K');
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.bytes(header.dump());
  const std::size_t count = named.size() * (ck.optimizer.first.empty() ? 1 : 3) + 2;
  w.pod<std::uint64_t>(count);
  w.tensor("scaling", Tensor(Shape{2}, std::vector<double>{ck.scaling.offset, ck.scaling.scale}));
  w.tensor("memory", ck.memory.memory);
  for (const auto& [name, t] : named) w.tensor("param/" + name, *t);
  if (!ck.optimizer.first.empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) w.tensor("adam.m/" + named[i].first, ck.optimizer.first[i]);
    for (std::size_t i = 0; i < named.size(); ++i) w.tensor("adam.v/" + named[i].first, ck.optimizer.second[i]);
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  for (char& c : magic) c = r.pod<char>();
  if (std::memcmp(magic, "PVCK", 4) != 0) r.fail("not a checkpoint file");
  if (r.pod<std::uint32_t>() != kCheckpointVersion) r.fail("unsupported checkpoint version");
  const json header = json::parse(r.bytes());

  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.epoch = header.at("epoch").get<std::uint64_t>();
  ck.optimizer.step = header.at("optimizer_step").get<std::uint64_t>();
  ck.rng = Rng(header.at("rng").at("seed").get<std::uint64_t>(), header.at("rng").at("position").get<std::uint64_t>());
  ck.meta = header.at("meta");

  std::map<std::string, Tensor> tensors;
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor();
    tensors.emplace(std::move(name), std::move(t));
  }
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) r.fail("missing tensor " + name);
    return it->second;
  };
  const Tensor scaling = take("scaling");
  ck.scaling = TargetScaling{scaling[0], scaling[1]};
  ck.memory = MemoryState{take("memory"), header.at("memory_step_count").get<std::uint64_t>()};
  ck.params = init_parameters(ck.config, 0);
  auto named = ck.params.named();
  for (auto& [name, t] : named) {
    Tensor loaded = take("param/" + name);
    if (loaded.shape() != t->shape()) r.fail("parameter " + name + " has the wrong shape");
    *t = std::move(loaded);
  }
  if (tensors.count("adam.m/" + named.front().first)) {
    for (auto& [name, t] : named) {
      ck.optimizer.first.push_back(take("adam.m/" + name));
      ck.optimizer.second.push_back(take("adam.v/" + name));
    }
  }
  ck.memory.validate(ck.config);
  return ck;
}

}  // namespace prionvit::model
