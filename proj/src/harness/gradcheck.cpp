#include "prionvit/harness.hpp"

namespace prionvit::harness {

namespace {

enum : std::uint64_t { kPerturbStream = 0x6C01, kInputStream = 0x6C02, kMemoryStream = 0x6C03 };

}  // namespace

GradCheckReport run_gradcheck(const model::PrionViTConfig& config, std::uint64_t seed,
                              const GradCheckOptions& options, std::size_t batch) {
  config.validate();
  if (batch < 1) throw std::invalid_argument("run_gradcheck: batch must be at least 1");
  model::PrionViT net(config, seed);

  // Move away from the symmetric initialization (zero gate, unit gammas) so
  // every term of the gate derivative is exercised.
  Rng perturb = Rng::derive(seed, {kPerturbStream});
  for (auto& [name, t] : net.params().named()) {
    for (std::size_t i = 0; i < t->numel(); ++i) (*t)[i] += perturb.normal(0.0, 0.1);
  }

  Rng inputs = Rng::derive(seed, {kInputStream});
  Tensor images(Shape{batch, config.input_size, config.input_size, config.channels});
  for (std::size_t i = 0; i < images.numel(); ++i) images[i] = inputs.uniform();
  Tensor targets(Shape{batch, 1});
  for (std::size_t i = 0; i < batch; ++i) targets[i] = inputs.normal();

  model::MemoryState initial = model::MemoryState::zeros(config);
  Rng mem = Rng::derive(seed, {kMemoryStream});
  for (std::size_t i = 0; i < initial.memory.numel(); ++i) initial.memory[i] = mem.normal(0.0, 0.5);

  auto loss_of = [&](Tape& tape, bool grad) {
    model::MemoryState state = initial;
    auto fwd = model::forward(tape, net, images, state, model::Mode::Train, nullptr, grad);
    Var loss = training::mse_loss(fwd.predictions, tape.constant(targets));
    return std::pair{loss, fwd.params};
  };

  Tape tape;
  auto [loss, bound] = loss_of(tape, true);
  const Gradients grads = tape.backward(loss);
  auto named = net.params().named();
  std::vector<Tensor> analytic;
  analytic.reserve(named.size());
  for (Var v : bound.all) analytic.push_back(grads[v]);

  std::vector<GradCheckParam> params;
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (!config.memory_enabled && named[i].first.rfind("gate.", 0) == 0) continue;
    params.push_back({named[i].first, named[i].second, &analytic[i]});
  }

  auto f = [&] {
    Tape t;
    t.set_grad_enabled(false);
    return loss_of(t, false).first.value().item();
  };
  return grad_check(f, params, options);
}

}  // namespace prionvit::harness
