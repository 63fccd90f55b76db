#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "prionvit/training.hpp"

using namespace prionvit;
using namespace prionvit::training;

namespace {

// Images of near-constant brightness; label is an affine function of the
// mean pixel value.
pipeline::Dataset linear_probe_dataset(std::size_t n, std::uint64_t seed) {
  pipeline::Dataset d;
  d.input_size = 32;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double level = rng.uniform(0.1, 0.9);
    pipeline::Sample s;
    s.image = Tensor(Shape{32, 32, 3});
    double total = 0.0;
    for (std::size_t k = 0; k < s.image.numel(); ++k) {
      s.image[k] = level + rng.uniform(-0.05, 0.05);
      total += s.image[k];
    }
    s.label = 100.0 * total / static_cast<double>(s.image.numel()) + 5.0;
    d.samples.push_back(std::move(s));
  }
  return d;
}

pipeline::Split simple_split(std::size_t n) { return pipeline::split_dataset(n, {0.7, 0.2, 0.1, 3}); }

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 11;
  return c;
}

model::PrionViTConfig small_model() {
  auto c = model::PrionViTConfig::tiny();
  c.dropout_rate = 0.1;
  return c;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("hand-computed triple") {
    const std::vector<double> p{2, 4, 6}, t{1, 5, 6};
    const auto m = compute_metrics(p, t);
    CHECK(std::abs(m.mae - 2.0 / 3.0) <= 1e-9);
    CHECK(std::abs(m.mse - 2.0 / 3.0) <= 1e-9);
    CHECK(std::abs(m.rmse - 0.816496580927726) <= 1e-9);
    CHECK(std::abs(m.max_error - 1.0) <= 1e-9);
    REQUIRE(m.r2.has_value());
    CHECK(std::abs(*m.r2 - 6.0 / 7.0) <= 1e-9);
    CHECK(m.count == 3);
  }

  TEST_CASE("agrees with the direct oracle on random data") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng.uniform_index(200);
      std::vector<double> p(n), t(n);
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = rng.uniform(0, 120);
        p[i] = t[i] + rng.normal(0, 2);
      }
      const auto m = compute_metrics(p, t);
      const auto o = oracles::metrics_direct(p, t);
      CHECK(std::abs(m.mse - o.mse) <= 1e-9);
      CHECK(std::abs(m.mae - o.mae) <= 1e-9);
      CHECK(std::abs(m.max_error - o.max_error) <= 1e-9);
      CHECK(std::abs(m.rmse * m.rmse - m.mse) <= 1e-9);
      if (n > 1) {
        REQUIRE(m.r2.has_value());
        CHECK(std::abs(*m.r2 - o.r2) <= 1e-9);
      }
    }
  }

  TEST_CASE("perfect predictions and constant targets") {
    const std::vector<double> v{1.5, 2.5, 9.0};
    const auto m = compute_metrics(v, v);
    CHECK(m.mse == 0.0);
    CHECK(m.max_error == 0.0);
    CHECK(*m.r2 == 1.0);
    const std::vector<double> c{3, 3, 3};
    CHECK_FALSE(compute_metrics(v, c).r2.has_value());
    CHECK_THROWS(compute_metrics(std::vector<double>{}, std::vector<double>{}));
    CHECK_THROWS(compute_metrics(v, std::vector<double>{1, 2}));
  }
}

TEST_SUITE("loss and optimizer") {
  TEST_CASE("mse_loss values and gradient") {
    CHECK(mse_loss(Tensor(Shape{2, 1}, {0, 0}), Tensor(Shape{2, 1}, {1, -1})) == 1.0);
    CHECK(mse_loss(Tensor(Shape{3, 1}, {1, 2, 3}), Tensor(Shape{3, 1}, {1, 2, 3})) == 0.0);
    Tape tape;
    Tensor pv(Shape{3, 1}, {1.0, -2.0, 0.5});
    pv.set_requires_grad(true);
    Var p = tape.leaf(pv);
    Var t = tape.constant(Tensor(Shape{3, 1}, {0.0, 1.0, 0.5}));
    const Gradients grads = tape.backward(mse_loss(p, t));
    const Tensor& g = grads[p];
    CHECK(g[0] == doctest::Approx(2.0 * 1.0 / 3.0));
    CHECK(g[1] == doctest::Approx(2.0 * -3.0 / 3.0));
    CHECK(g[2] == 0.0);
    CHECK_THROWS(mse_loss(Tensor(Shape{2, 1}), Tensor(Shape{3, 1})));
  }

  TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor w(Shape{4}, {1, 2, 3, 4});
    const Tensor before = w;
    const Tensor g(Shape{4});
    std::vector<std::pair<std::string, Tensor*>> params{{"w", &w}};
    std::vector<const Tensor*> grads{&g};
    model::OptimizerMoments m;
    for (int i = 0; i < 5; ++i) adam_step(params, grads, m, {});
    CHECK(w == before);
    CHECK(m.step == 5);
  }

  TEST_CASE("adam: constant gradient step tends to lr") {
    Tensor w(Shape{2}, {0.0, 0.0});
    const Tensor g(Shape{2}, {0.3, -7.0});
    std::vector<std::pair<std::string, Tensor*>> params{{"w", &w}};
    std::vector<const Tensor*> grads{&g};
    model::OptimizerMoments m;
    AdamConfig cfg;
    cfg.learning_rate = 1e-2;
    double last0 = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double before = w[0];
      adam_step(params, grads, m, cfg);
      last0 = before - w[0];
    }
    CHECK(last0 == doctest::Approx(1e-2).epsilon(1e-4));
    CHECK(w[1] > 0.0);
  }

  TEST_CASE("adam: non-finite gradient names the parameter and changes nothing") {
    Tensor a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
    const Tensor ga(Shape{2}, {0.1, 0.1});
    const Tensor gb(Shape{2}, {std::numeric_limits<double>::quiet_NaN(), 0.0});
    std::vector<std::pair<std::string, Tensor*>> params{{"alpha", &a}, {"beta.w", &b}};
    std::vector<const Tensor*> grads{&ga, &gb};
    model::OptimizerMoments m;
    CHECK_THROWS_WITH_AS(adam_step(params, grads, m, {}), doctest::Contains("beta.w"), NonFiniteGradient);
    CHECK(a == Tensor(Shape{2}, {1, 2}));
    CHECK(m.step == 0);
  }
}

TEST_SUITE("train and evaluate") {
  TEST_CASE("epochs = 0 is rejected") {
    auto data = linear_probe_dataset(20, 1);
    auto cfg = quick(0);
    CHECK_THROWS(train(model::PrionViT(small_model(), 1), data, simple_split(20), cfg));
  }

  TEST_CASE("linear probe: loss falls below 10% of epoch 1 by epoch 30") {
    auto data = linear_probe_dataset(96, 2);
    auto cfg = quick(30);
    cfg.learning_rate = 1e-2;
    auto mc = small_model();
    mc.dropout_rate = 0.0;
    const auto r = train(model::PrionViT(mc, 4), data, simple_split(96), cfg);
    REQUIRE(r.history.epochs.size() == 30);
    const double first = r.history.epochs.front().train_loss;
    const double last = r.history.epochs.back().train_loss;
    CAPTURE(first);
    CAPTURE(last);
    CHECK(last < 0.1 * first);
    for (const auto& e : r.history.epochs) CHECK(std::abs(e.validation.rmse * e.validation.rmse - e.validation.mse) <= 1e-9);
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.history.epochs.size(); ++i)
      if (r.history.epochs[i].validation.mae < r.history.epochs[best].validation.mae) best = i;
    CHECK(r.history.best_epoch == best + 1);
  }

  TEST_CASE("identical seeds give identical trajectories") {
    auto data = linear_probe_dataset(30, 3);
    auto cfg = quick(4);
    pipeline::AugmentConfig aug;
    TrainOptions o;
    o.augment = aug;
    const auto a = train(model::PrionViT(small_model(), 9), data, simple_split(30), cfg, o);
    const auto b = train(model::PrionViT(small_model(), 9), data, simple_split(30), cfg, o);
    CHECK(a.history.same_trajectory(b.history));
    CHECK(a.memory.memory == b.memory.memory);
    cfg.seed = 12;
    const auto c = train(model::PrionViT(small_model(), 9), data, simple_split(30), cfg, o);
    CHECK_FALSE(a.history.same_trajectory(c.history));
  }

  TEST_CASE("stateful memory persists across batches during training") {
    auto data = linear_probe_dataset(30, 4);
    const auto r = train(model::PrionViT(small_model(), 2), data, simple_split(30), quick(2));
    CHECK(r.memory.step_count > 0);
    double norm = 0.0;
    for (std::size_t i = 0; i < r.memory.memory.numel(); ++i) norm += std::abs(r.memory.memory[i]);
    CHECK(norm > 0.0);
  }

  TEST_CASE("evaluate is permutation invariant under frozen memory") {
    auto data = linear_probe_dataset(40, 5);
    const auto split = simple_split(40);
    const auto r = train(model::PrionViT(small_model(), 6), data, split, quick(2));
    std::vector<std::size_t> idx(40);
    for (std::size_t i = 0; i < 40; ++i) idx[i] = i;
    Rng rng(77);
    const auto shuffled = pipeline::shuffled(idx, rng);
    const auto a = evaluate(r.model, r.memory, data, idx, "all", 7);
    const auto b = evaluate(r.model, r.memory, data, shuffled, "all", 16);
    CHECK(std::abs(a.report.mae - b.report.mae) <= 1e-9);
    CHECK(std::abs(a.report.mse - b.report.mse) <= 1e-9);
    CHECK(std::abs(a.report.max_error - b.report.max_error) <= 1e-9);
    CHECK(std::abs(*a.report.r2 - *b.report.r2) <= 1e-9);
    CHECK_THROWS(evaluate(r.model, r.memory, data, std::vector<std::size_t>{}, "none"));
  }
}
