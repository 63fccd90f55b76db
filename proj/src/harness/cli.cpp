#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "prionvit/harness.hpp"
#include "prionvit/image_io.hpp"
#include "prionvit/kernels.hpp"

namespace prionvit::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string kernels;
};

ExperimentConfig load(const std::string& path, const Globals& g) {
  ExperimentConfig cfg = load_config(path);
  apply_seed_overrides(cfg, g.seed);
  return cfg;
}

std::string split_name_ok(const std::string& s) {
  if (s == "train" || s == "test" || s == "val") return {};
  return "split must be train, test or val";
}

const std::vector<std::size_t>& pick(const pipeline::Split& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  return split.test;
}

struct Loaded {
  model::PrionViT model;
  model::MemoryState memory;
};

Loaded load_model(const std::string& path) {
  auto ck = model::load_checkpoint(path);
  return {model::PrionViT(ck.config, std::move(ck.params), ck.scaling), std::move(ck.memory)};
}

void print_metrics(const training::MetricsReport& r) {
  std::printf("%-5s n=%zu  MAE %.4f  RMSE %.4f  MaxErr %.4f  R2 %s\n", r.split.c_str(), r.count, r.mae, r.rmse,
              r.max_error, r.r2 ? std::to_string(*r.r2).c_str() : "undefined");
}

int cmd_gen_data(const Globals& g, double t_min, double t_max, double step, speckle::ModeSetParams modes,
                 const std::string& preview) {
  const fs::path out(g.out_dir);
  auto set = speckle::make_mode_set(modes);
  auto manifest = speckle::generate_dataset(set, t_min, t_max, step, out);
  std::printf("wrote %zu specklegrams and %s to %s\n", manifest.size(), speckle::kManifestName, out.c_str());
  if (!preview.empty()) {
    const auto img = speckle::render_specklegram(set, t_min);
    io::write_gray8(out / preview, img);
  }
  return 0;
}

int cmd_train(const Globals& g, const std::string& config_path) {
  ExperimentConfig cfg = load(config_path, g);
  const fs::path out(g.out_dir);
  fs::create_directories(out);
  const std::string hash = config_hash(cfg);
  write_json(out / "config.json", config_to_json(cfg));

  const auto data = prepare_dataset(cfg, out);
  const auto split = pipeline::split_dataset(data.size(), cfg.split_spec());
  std::printf("dataset %zu samples, split %zu/%zu/%zu, config %s, seed %llu\n", data.size(), split.train.size(),
              split.test.size(), split.val.size(), hash.c_str(), static_cast<unsigned long long>(cfg.seed()));

  training::TrainOptions options;
  options.augment = cfg.augment;
  options.config_hash = hash;
  options.checkpoint_dir = out / "checkpoints";
  options.on_epoch = [](const training::EpochRecord& e) {
    std::printf("epoch %3zu  loss %.5f  val MAE %.4f  (%.1fs)\n", e.epoch, e.train_loss, e.validation.mae,
                e.wall_time_s);
    std::fflush(stdout);
  };
  auto result = training::train(model::PrionViT(cfg.model, cfg.seed()), data, split, cfg.train, options);

  write_history_csv(out / "history.csv", result.history);
  write_json(out / "history.json", to_json(result.history));

  model::Checkpoint ck;
  ck.config = result.model.config();
  ck.scaling = result.model.scaling();
  ck.params = result.model.params();
  ck.memory = result.memory;
  ck.epoch = result.history.best_epoch;
  ck.rng = Rng(cfg.seed());
  ck.meta = {{"config_hash", hash}, {"seed", cfg.seed()}, {"experiment", config_to_json(cfg)}};
  model::save_checkpoint(out / "model.ckpt", ck);

  for (const std::string name : {"val", "test"}) {
    const auto& idx = pick(split, name);
    if (idx.empty()) continue;
    auto ev = training::evaluate(result.model, result.memory, data, idx, name, cfg.train.eval_batch_size);
    ev.report.config_hash = hash;
    ev.report.seed = cfg.seed();
    write_json(out / ("metrics_" + name + ".json"), to_json(ev.report));
    print_metrics(ev.report);
    if (name == "test") emit_scatter(ev.predictions, ev.targets, out);
  }
  return 0;
}

training::Evaluation eval_split(const Globals& g, const std::string& config_path, const std::string& ckpt,
                                const std::string& split_name, std::string& hash) {
  ExperimentConfig cfg = load(config_path, g);
  hash = config_hash(cfg);
  auto loaded = load_model(ckpt);
  if (loaded.model.config().input_size != cfg.model.input_size) {
    throw std::invalid_argument("checkpoint input size does not match the config");
  }
  const auto data = prepare_dataset(cfg, g.out_dir);
  const auto split = pipeline::split_dataset(data.size(), cfg.split_spec());
  const auto& idx = pick(split, split_name);
  auto ev = training::evaluate(loaded.model, loaded.memory, data, idx, split_name, cfg.train.eval_batch_size);
  ev.report.config_hash = hash;
  ev.report.seed = cfg.seed();
  return ev;
}

int cmd_eval(const Globals& g, const std::string& config_path, const std::string& ckpt, const std::string& split) {
  std::string hash;
  auto ev = eval_split(g, config_path, ckpt, split, hash);
  write_json(fs::path(g.out_dir) / ("metrics_" + split + ".json"), to_json(ev.report));
  print_metrics(ev.report);
  return 0;
}

int cmd_plot(const Globals& g, const std::string& config_path, const std::string& ckpt, const std::string& split) {
  std::string hash;
  auto ev = eval_split(g, config_path, ckpt, split, hash);
  emit_scatter(ev.predictions, ev.targets, g.out_dir);
  std::printf("wrote %s and %s (%zu points)\n", kScatterCsv, kScatterSvg, ev.predictions.size());
  return 0;
}

int cmd_ablate(const Globals& g, const std::string& config_path, std::size_t seeds, bool parallel) {
  ExperimentConfig cfg = load(config_path, g);
  const fs::path out(g.out_dir);
  fs::create_directories(out);
  const auto data = prepare_dataset(cfg, out);
  std::vector<AblationReport> reports;
  for (std::size_t s = 0; s < seeds; ++s) {
    ExperimentConfig run = cfg;
    run.train.seed = cfg.seed() + s;
    AblationOptions options;
    options.parallel = parallel;
    reports.push_back(run_ablation(run, data, options));
    const auto& r = reports.back();
    std::printf("seed %llu  prion-vit MAE %.4f R2 %.4f | plain-vit MAE %.4f R2 %.4f\n",
                static_cast<unsigned long long>(r.seed), r.prion.test.mae, r.prion.test.r2.value_or(NAN),
                r.plain.test.mae, r.plain.test.r2.value_or(NAN));
    std::fflush(stdout);
  }
  write_json(out / "ablation.json", ablation_document(reports));
  return 0;
}

int cmd_bench(const Globals& g, const std::string& config_path, const std::string& ckpt, std::size_t runs,
              std::size_t warmup) {
  ExperimentConfig cfg = load(config_path, g);
  const std::string hash = config_hash(cfg);
  std::vector<std::pair<model::PrionViT, model::MemoryState>> models;
  if (!ckpt.empty()) {
    auto loaded = load_model(ckpt);
    models.emplace_back(std::move(loaded.model), std::move(loaded.memory));
  } else {
    for (bool mem : {true, false}) {
      auto mc = cfg.model;
      mc.memory_enabled = mem;
      models.emplace_back(model::PrionViT(mc, cfg.seed()), model::MemoryState::zeros(mc));
    }
  }
  Rng rng = Rng::derive(cfg.seed(), {0xBE7C});
  SteadyClock clock;
  json reports = json::array();
  for (auto& [net, state] : models) {
    const auto& mc = net.config();
    Tensor image(Shape{1, mc.input_size, mc.input_size, mc.channels});
    for (std::size_t i = 0; i < image.numel(); ++i) image[i] = rng.uniform();
    BenchReport r = bench_inference(net, state, image, runs, warmup, clock);
    r.config_hash = hash;
    r.seed = cfg.seed();
    std::printf("%-9s mean %.6f s over %zu runs (warmup %zu), peak RSS %.1f MB\n", r.label.c_str(), r.mean_latency_s,
                r.n_runs, r.warmup, r.peak_memory_mb);
    reports.push_back(to_json(r));
  }
  json doc{{"config_hash", hash},
           {"seed", cfg.seed()},
           {"kernels", std::string(kernels::backend_name(kernels::active().backend))},
           {"reports", reports},
           {"reference",
            {{"prion-vit", {{"mean_latency_s", 0.045}, {"peak_memory_mb", 218}}},
             {"plain-vit", {{"mean_latency_s", 0.092}, {"peak_memory_mb", 278}}}}}};
  write_json(fs::path(g.out_dir) / "bench.json", doc);
  return 0;
}

int cmd_gradcheck(const Globals& g, const std::string& config_path, const std::string& mode, GradCheckOptions opts,
                  std::size_t batch) {
  ExperimentConfig cfg = load(config_path, g);
  opts.seed = cfg.seed();
  std::vector<model::MemoryMode> modes;
  if (mode == "both" || mode == "per_sample") modes.push_back(model::MemoryMode::PerSample);
  if (mode == "both" || mode == "literal") modes.push_back(model::MemoryMode::Literal);
  bool ok = true;
  json runs = json::object();
  for (auto m : modes) {
    auto mc = cfg.model;
    mc.memory_mode = m;
    const auto report = run_gradcheck(mc, cfg.seed(), opts, batch);
    for (const auto& e : report.entries) {
      std::printf("  %-8s %-22s %4zu coords  max rel err %.3e", model::to_string(m).c_str(), e.name.c_str(),
                  e.checked, e.max_rel_error);
      if (e.refined) std::printf("  (%zu at a smaller step)", e.refined);
      std::printf("\n");
    }
    std::printf("%s: max rel err %.3e (tol %.0e) %s\n", model::to_string(m).c_str(), report.max_rel_error, report.tol,
                report.passed ? "PASS" : "FAIL");
    runs[model::to_string(m)] = to_json(report);
    ok = ok && report.passed;
  }
  write_json(fs::path(g.out_dir) / "gradcheck.json",
             json{{"config_hash", config_hash(cfg)}, {"seed", cfg.seed()}, {"modes", runs}, {"passed", ok}});
  return ok ? 0 : 1;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Prion-ViT: specklegram temperature regression with gated transformer memory", "prion_vit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Experiment seed (overrides the config and PRION_VIT_SEED)");
  app.add_option("--out-dir", g.out_dir, "Directory for every output file")->capture_default_str();
  app.add_option("--kernels", g.kernels, "Kernel backend: scalar, avx2 or neon (default: best available)")
      ->check(CLI::IsMember({"scalar", "avx2", "neon"}));

  std::string config_path, ckpt, split = "test", mode = "both";

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic specklegram dataset and manifest.csv");
  double t_min = 0.0, t_max = 120.0, step = 0.2;
  speckle::ModeSetParams modes;
  std::string preview;
  gen->add_option("--t-min", t_min, "First temperature (C)")->capture_default_str();
  gen->add_option("--t-max", t_max, "Last temperature (C), inclusive")->capture_default_str();
  gen->add_option("--step", step, "Temperature step (C)")->capture_default_str();
  gen->add_option("--modes", modes.mode_count, "Number of fiber modes")->capture_default_str();
  gen->add_option("--width", modes.width, "Image width (px)")->capture_default_str();
  gen->add_option("--height", modes.height, "Image height (px)")->capture_default_str();
  gen->add_option("--kappa-min", modes.kappa_min, "Smallest thermal phase rate (rad/C)")->capture_default_str();
  gen->add_option("--kappa-max", modes.kappa_max, "Largest thermal phase rate (rad/C)")->capture_default_str();
  gen->add_option("--grain", modes.grain_sigma_px, "Speckle grain size (px)")->capture_default_str();
  gen->add_option("--mode-seed", modes.seed, "Seed of the fiber mode set")->capture_default_str();
  gen->add_option("--preview", preview, "Also write the first image under this name");

  auto* train = app.add_subcommand("train", "Train a model; writes history.csv, metrics_<split>.json, scatter");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics_<split>.json");
  eval->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train, test or val")->check(split_name_ok)->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Train prion-vit and plain-vit on identical data; writes ablation.json");
  std::size_t seeds = 1;
  bool parallel = false;
  ablate->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_flag("--parallel", parallel, "Train the two variants in two threads");

  auto* bench = app.add_subcommand("bench", "Single-image inference latency and peak memory; writes bench.json");
  std::size_t runs = 20, warmup = 3;
  bench->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  bench->add_option("--checkpoint", ckpt, "Benchmark this checkpoint instead of freshly initialized variants")
      ->check(CLI::ExistingFile);
  bench->add_option("--runs", runs, "Timed runs")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--warmup", warmup, "Discarded warmup runs")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic and central-difference gradients");
  GradCheckOptions gopts;
  std::size_t batch = 2;
  grad->add_option("--config", config_path, "Experiment config (JSON); the model section is used")
      ->required()
      ->check(CLI::ExistingFile);
  grad->add_option("--mode", mode, "per_sample, literal or both")
      ->check(CLI::IsMember({"per_sample", "literal", "both"}))
      ->capture_default_str();
  grad->add_option("--step", gopts.h, "Relative finite-difference step")->capture_default_str();
  grad->add_option("--tol", gopts.tol, "Maximum relative error")->capture_default_str();
  grad->add_option("--refinements", gopts.refinements, "Retries at h/10, h/100, ... for coordinates over tolerance")
      ->capture_default_str();
  grad->add_option("--max-coords", gopts.max_coords, "Coordinates sampled per tensor")->capture_default_str();
  grad->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();

  auto* plot = app.add_subcommand("plot", "Scatter of predictions vs targets; writes scatter.csv and scatter.svg");
  plot->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  plot->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  plot->add_option("--split", split, "train, test or val")->check(split_name_ok)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (dynamic_cast<const CLI::RequiredError*>(&e) && app.get_subcommands().empty()) {
      std::cerr << app.help();
    }
    return 2;
  }

  try {
    if (!g.kernels.empty()) kernels::set_backend(kernels::parse_backend(g.kernels));
    fs::create_directories(g.out_dir);
    if (gen->parsed()) return cmd_gen_data(g, t_min, t_max, step, modes, preview);
    if (train->parsed()) return cmd_train(g, config_path);
    if (eval->parsed()) return cmd_eval(g, config_path, ckpt, split);
    if (ablate->parsed()) return cmd_ablate(g, config_path, seeds, parallel);
    if (bench->parsed()) return cmd_bench(g, config_path, ckpt, runs, warmup);
    if (grad->parsed()) return cmd_gradcheck(g, config_path, mode, gopts, batch);
    if (plot->parsed()) return cmd_plot(g, config_path, ckpt, split);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace prionvit::harness
