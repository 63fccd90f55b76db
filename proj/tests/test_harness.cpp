#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

using namespace prionvit;
using namespace prionvit::harness;
using support::json;
using support::TempDir;
namespace fs = std::filesystem;

namespace {

// Returns scripted timestamps.
class ScriptedClock final : public Clock {
 public:
  explicit ScriptedClock(std::vector<double> times) : times_(std::move(times)) {}
  double now_seconds() override { return times_.at(next_++); }
  std::size_t calls() const { return next_; }

 private:
  std::vector<double> times_;
  std::size_t next_ = 0;
};

// Clock whose successive intervals are given.
std::vector<double> timeline(const std::vector<double>& durations) {
  std::vector<double> t;
  double now = 100.0;
  for (double d : durations) {
    t.push_back(now);
    now += d;
    t.push_back(now);
    now += 0.5;
  }
  return t;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "prion_vit");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

fs::path write_config(const fs::path& dir, const ExperimentConfig& cfg) {
  const auto p = dir / "config.json";
  std::ofstream(p) << config_to_json(cfg).dump(2);
  return p;
}

struct EnvGuard {
  explicit EnvGuard(const char* name) : name_(name) {
    if (const char* v = std::getenv(name)) saved_ = v;
  }
  ~EnvGuard() {
    if (saved_) ::setenv(name_, saved_->c_str(), 1);
    else ::unsetenv(name_);
  }
  const char* name_;
  std::optional<std::string> saved_;
};

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("round trip and strict keys") {
    TempDir tmp("cfg");
    const auto cfg = support::tiny_experiment(tmp.path());
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    for (const char* section : {"model", "train", "data", "augment"}) {
      json j = config_to_json(cfg);
      j[section]["nonsense"] = 1;
      const std::string key = std::string(section) + ".nonsense";
      CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains(key.c_str()), std::invalid_argument);
    }
    json top = config_to_json(cfg);
    top["extra"] = json::object();
    CHECK_THROWS_AS(config_from_json(top), std::invalid_argument);
    CHECK_THROWS(config_from_json(json::parse(R"({"train": {"epochs": "many"}})")));
  }

  TEST_CASE("hash is stable and sensitive") {
    TempDir tmp("hash");
    auto cfg = support::tiny_experiment(tmp.path());
    const auto h = config_hash(cfg);
    CHECK(support::is_hash(h));
    CHECK(config_hash(config_from_json(config_to_json(cfg))) == h);
    cfg.train.learning_rate *= 2;
    CHECK(config_hash(cfg) != h);
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }

  TEST_CASE("seed overrides: env, then CLI") {
    EnvGuard guard("PRION_VIT_SEED");
    TempDir tmp("seed");
    auto cfg = support::tiny_experiment(tmp.path());
    ::unsetenv("PRION_VIT_SEED");
    apply_seed_overrides(cfg, std::nullopt);
    CHECK(cfg.seed() == 5);
    ::setenv("PRION_VIT_SEED", "42", 1);
    apply_seed_overrides(cfg, std::nullopt);
    CHECK(cfg.seed() == 42);
    apply_seed_overrides(cfg, 9);
    CHECK(cfg.seed() == 9);
    ::setenv("PRION_VIT_SEED", "not-a-number", 1);
    CHECK_THROWS(apply_seed_overrides(cfg, std::nullopt));
  }

  TEST_CASE("split seed defaults to the experiment seed") {
    TempDir tmp("split");
    auto cfg = support::tiny_experiment(tmp.path());
    CHECK(cfg.split_spec().seed == 5);
    cfg.data.split_seed = 77;
    CHECK(cfg.split_spec().seed == 77);
  }
}

TEST_SUITE("scatter") {
  TEST_CASE("csv rows and svg") {
    TempDir tmp("scatter");
    std::vector<double> t(601), p(601);
    for (std::size_t i = 0; i < 601; ++i) t[i] = p[i] = 0.2 * static_cast<double>(i);
    emit_scatter(p, t, tmp.path());
    CHECK(count_lines(tmp.path() / kScatterCsv) == 602);
    std::ifstream in(tmp.path() / kScatterCsv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "target_c,prediction_c");
    const auto svg = scatter_svg(p, t);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("identity") != std::string::npos);
    CHECK(fs::exists(tmp.path() / kScatterSvg));
  }

  TEST_CASE("errors") {
    TempDir tmp("scatter_err");
    CHECK_THROWS(emit_scatter(std::vector<double>{}, std::vector<double>{}, tmp.path()));
    CHECK_THROWS(emit_scatter(std::vector<double>{1, 2}, std::vector<double>{1}, tmp.path()));
  }
}

TEST_SUITE("bench") {
  model::PrionViT tiny_model() { return model::PrionViT(model::PrionViTConfig::tiny(), 3); }

  TEST_CASE("single run, no warmup: mean equals the measured latency") {
    auto m = tiny_model();
    ScriptedClock clock(timeline({0.25}));
    const auto r = bench_inference(m, model::MemoryState::zeros(m.config()), Tensor(Shape{1, 32, 32, 3}, 0.5), 1, 0,
                                   clock);
    CHECK(r.mean_latency_s == 0.25);
    CHECK(r.min_latency_s == 0.25);
    CHECK(r.max_latency_s == 0.25);
    CHECK(r.n_runs == 1);
    CHECK(clock.calls() == 2);
  }

  TEST_CASE("warmup runs are excluded exactly") {
    auto m = tiny_model();
    ScriptedClock clock(timeline({10.0, 20.0, 1.0, 2.0, 3.0}));
    const auto r = bench_inference(m, model::MemoryState::zeros(m.config()), Tensor(Shape{1, 32, 32, 3}, 0.5), 3, 2,
                                   clock);
    CHECK(r.mean_latency_s == 2.0);
    CHECK(r.min_latency_s == 1.0);
    CHECK(r.max_latency_s == 3.0);
    CHECK(r.warmup == 2);
    CHECK(r.input_shape == Shape{1, 32, 32, 3});
  }

  TEST_CASE("contract checks and schema") {
    auto m = tiny_model();
    SteadyClock clock;
    const auto state = model::MemoryState::zeros(m.config());
    CHECK_THROWS(bench_inference(m, state, Tensor(Shape{2, 32, 32, 3}), 1, 0, clock));
    CHECK_THROWS(bench_inference(m, state, Tensor(Shape{1, 32, 32, 3}), 0, 0, clock));
    auto online_cfg = m.config();
    online_cfg.inference_memory = model::InferenceMemory::Online;
    CHECK_THROWS(bench_inference(model::PrionViT(online_cfg, m.params()), state, Tensor(Shape{1, 32, 32, 3}), 1, 0,
                                 clock));
    auto r = bench_inference(m, state, Tensor(Shape{1, 32, 32, 3}, 0.5), 3, 1, clock);
    r.label = "prion-vit";
    r.config_hash = "0123456789abcdef";
    CHECK(support::check_bench_report_schema(to_json(r)).empty());
    CHECK(peak_rss_mb() > 0.0);
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("variants share the split; report schema") {
    TempDir tmp("ablate");
    const auto cfg = support::tiny_experiment(tmp.path() / "data");
    const auto data = prepare_dataset(cfg, tmp.path());
    REQUIRE(data.size() == 20);
    const auto report = run_ablation(cfg, data);
    CHECK(report.prion.split_hash == report.plain.split_hash);
    CHECK(report.prion.label == "prion-vit");
    CHECK(report.plain.label == "plain-vit");
    CHECK(report.prion.parameter_count > report.plain.parameter_count);
    CHECK(report.prion.parameter_count - report.plain.parameter_count == 8 * 8 + 8);
    CHECK(report.config_hash == config_hash(cfg));
    const std::vector<AblationReport> all{report};
    const auto doc = ablation_document(all);
    const auto errs = support::check_ablation_document_schema(doc);
    for (const auto& e : errs) MESSAGE(e);
    CHECK(errs.empty());

    AblationOptions par;
    par.parallel = true;
    const auto again = run_ablation(cfg, data, par);
    CHECK(again.prion.history.same_trajectory(report.prion.history));
    CHECK(again.plain.history.same_trajectory(report.plain.history));
  }
}

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"--no-such-flag"}) == 2);
    CHECK(run_cli({"train"}) == 2);
    CHECK(run_cli({"train", "--config", "/nonexistent/config.json"}) == 2);
    CHECK(run_cli({"gradcheck", "--bogus"}) == 2);
    CHECK(run_cli({"--help"}) == 0);
  }

  TEST_CASE("runtime failure exits 1") {
    TempDir tmp("cli_fail");
    const auto bad = tmp.path() / "bad.json";
    std::ofstream(bad) << R"({"model": {"input_size": 30}})";
    CHECK(run_cli({"--out-dir", tmp.path().string(), "train", "--config", bad.string()}) == 1);
    std::ofstream(bad) << "{ not json";
    CHECK(run_cli({"--out-dir", tmp.path().string(), "train", "--config", bad.string()}) == 1);
  }

  TEST_CASE("gen-data writes one row per grid temperature") {
    TempDir tmp("cli_gen");
    CHECK(run_cli({"--out-dir", tmp.path().string(), "gen-data", "--t-min", "0", "--t-max", "2", "--step", "0.5",
                   "--width", "24", "--height", "24"}) == 0);
    CHECK(count_lines(tmp.path() / speckle::kManifestName) == 1 + 5);
  }

  TEST_CASE("gradcheck on the tiny config exits 0") {
    TempDir tmp("cli_grad");
    const auto cfg = write_config(tmp.path(), support::tiny_experiment(tmp.path() / "data"));
    CHECK(run_cli({"--out-dir", tmp.path().string(), "gradcheck", "--config", cfg.string()}) == 0);
    const auto doc = read_json(tmp.path() / "gradcheck.json");
    CHECK(doc.dump().find("\"passed\":true") != std::string::npos);
  }

  TEST_CASE("train, eval, plot, bench, ablate end to end") {
    TempDir tmp("cli_flow");
    const auto cfg = support::tiny_experiment(tmp.path() / "data");
    const auto cfg_path = write_config(tmp.path(), cfg);
    const auto out = tmp.path() / "run";
    const std::string o = out.string(), c = cfg_path.string();
    REQUIRE(run_cli({"--out-dir", o, "--kernels", "scalar", "train", "--config", c}) == 0);
    for (const char* f : {"history.csv", "history.json", "model.ckpt", "metrics_val.json", "metrics_test.json",
                          "scatter.csv", "scatter.svg", "config.json"})
      CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK(count_lines(out / "history.csv") == 1 + cfg.train.epochs);
    const auto test_metrics = read_json(out / "metrics_test.json");
    CHECK(support::check_metrics_schema(test_metrics).empty());
    CHECK(test_metrics["config_hash"] == config_hash(cfg));

    const auto ck = (out / "model.ckpt").string();
    CHECK(run_cli({"--out-dir", o, "eval", "--config", c, "--checkpoint", ck, "--split", "val"}) == 0);
    CHECK(read_json(out / "metrics_val.json")["split"] == "val");
    CHECK(run_cli({"--out-dir", o, "eval", "--config", c, "--checkpoint", ck, "--split", "bogus"}) == 2);
    CHECK(run_cli({"--out-dir", o, "plot", "--config", c, "--checkpoint", ck}) == 0);
    CHECK(count_lines(out / "scatter.csv") == 1 + 4);

    CHECK(run_cli({"--out-dir", o, "bench", "--config", c, "--runs", "2", "--warmup", "1"}) == 0);
    const auto bench = read_json(out / "bench.json");
    CHECK(support::check_bench_document_schema(bench).empty());
    CHECK(bench["reports"].size() == 2);
    CHECK(run_cli({"--out-dir", o, "bench", "--config", c, "--checkpoint", ck, "--runs", "1"}) == 0);
    CHECK(support::check_bench_document_schema(read_json(out / "bench.json")).empty());

    CHECK(run_cli({"--out-dir", o, "--seed", "6", "ablate", "--config", c, "--seeds", "2"}) == 0);
    const auto abl = read_json(out / "ablation.json");
    CHECK(support::check_ablation_document_schema(abl).empty());
    CHECK(abl["runs"].size() == 2);
    CHECK(abl["seed"] == 6);
  }
}
