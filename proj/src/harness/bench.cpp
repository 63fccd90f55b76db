#include <algorithm>
#include <fstream>
#include <sstream>

#include "prionvit/harness.hpp"

namespace prionvit::harness {

using nlohmann::json;

double peak_rss_mb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      double kb = 0.0;
      fields >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

BenchReport bench_inference(const model::PrionViT& model, const model::MemoryState& state, const Tensor& image,
                            std::size_t n_runs, std::size_t warmup, Clock& clock) {
  if (n_runs < 1) throw std::invalid_argument("bench_inference: n_runs must be at least 1");
  const auto& cfg = model.config();
  if (cfg.memory_enabled && cfg.inference_memory != model::InferenceMemory::Frozen) {
    throw std::invalid_argument("bench_inference: requires frozen inference memory");
  }
  const Shape expect{1, cfg.input_size, cfg.input_size, cfg.channels};
  if (image.shape() != expect) {
    throw ShapeError("bench_inference: expected input " + shape_str(expect) + ", got " + shape_str(image.shape()));
  }

  BenchReport r;
  r.label = cfg.memory_enabled ? "prion-vit" : "plain-vit";
  r.n_runs = n_runs;
  r.warmup = warmup;
  r.input_shape = image.shape();

  model::MemoryState snapshot = state;
  std::vector<double> latencies;
  latencies.reserve(n_runs);
  for (std::size_t i = 0; i < warmup + n_runs; ++i) {
    const double t0 = clock.now_seconds();
    const Tensor out = model::predict(model, image, snapshot);
    const double t1 = clock.now_seconds();
    if (!out.all_finite()) throw std::runtime_error("bench_inference: non-finite prediction");
    if (i >= warmup) latencies.push_back(t1 - t0);
  }
  double sum = 0.0;
  for (double l : latencies) sum += l;
  r.mean_latency_s = sum / static_cast<double>(latencies.size());
  r.min_latency_s = *std::min_element(latencies.begin(), latencies.end());
  r.max_latency_s = *std::max_element(latencies.begin(), latencies.end());
  r.peak_memory_mb = peak_rss_mb();
  return r;
}

json to_json(const BenchReport& r) {
  return json{{"label", r.label},
              {"peak_memory_mb", r.peak_memory_mb},
              {"mean_latency_s", r.mean_latency_s},
              {"min_latency_s", r.min_latency_s},
              {"max_latency_s", r.max_latency_s},
              {"n_runs", r.n_runs},
              {"warmup", r.warmup},
              {"input_shape", r.input_shape},
              {"config_hash", r.config_hash},
              {"seed", r.seed}};
}

}  // namespace prionvit::harness
