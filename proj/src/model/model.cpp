#include "prionvit/model.hpp"

#include <cmath>
#include <stdexcept>

namespace prionvit::model {

void PrionViTConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (input_size == 0 || patch_size == 0 || channels == 0 || embed_dim == 0 || num_blocks == 0 || num_heads == 0 ||
      ffn_dim == 0 || head_hidden == 0) {
    fail("all extents must be positive");
  }
  if (input_size % patch_size != 0) {
    fail("input_size " + std::to_string(input_size) + " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  if (!(init_std > 0.0) || !std::isfinite(init_std)) fail("init_std must be positive");
}

PrionViTConfig PrionViTConfig::tiny() {
  PrionViTConfig c;
  c.input_size = 32;
  c.patch_size = 16;
  c.embed_dim = 8;
  c.num_blocks = 2;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.head_hidden = 8;
  return c;
}

std::string to_string(MemoryMode mode) { return mode == MemoryMode::PerSample ? "per_sample" : "literal"; }
std::string to_string(MemoryPersistence p) { return p == MemoryPersistence::Stateful ? "stateful" : "stateless"; }
std::string to_string(InferenceMemory m) { return m == InferenceMemory::Frozen ? "frozen" : "online"; }

MemoryMode parse_memory_mode(const std::string& text) {
  if (text == "per_sample") return MemoryMode::PerSample;
  if (text == "literal") return MemoryMode::Literal;
  throw std::invalid_argument("memory_mode must be per_sample or literal, got '" + text + "'");
}

MemoryPersistence parse_memory_persistence(const std::string& text) {
  if (text == "stateful") return MemoryPersistence::Stateful;
  if (text == "stateless") return MemoryPersistence::Stateless;
  throw std::invalid_argument("memory_persistence must be stateful or stateless, got '" + text + "'");
}

InferenceMemory parse_inference_memory(const std::string& text) {
  if (text == "frozen") return InferenceMemory::Frozen;
  if (text == "online") return InferenceMemory::Online;
  throw std::invalid_argument("inference_memory must be frozen or online, got '" + text + "'");
}

MemoryState MemoryState::zeros(const PrionViTConfig& config) {
  return MemoryState{Tensor(Shape{config.num_tokens(), config.embed_dim}, 0.0), 0};
}

void MemoryState::validate(const PrionViTConfig& config) const {
  const Shape expected{config.num_tokens(), config.embed_dim};
  if (memory.shape() != expected) {
    throw ShapeError("memory state shape " + shape_str(memory.shape()) + " does not match config " +
                     shape_str(expected));
  }
  if (!memory.all_finite()) throw std::domain_error("memory state contains non-finite values");
}

std::vector<std::pair<std::string, Tensor*>> Parameters::named() {
  std::vector<std::pair<std::string, Tensor*>> out{
      {"patch.w", &patch_w}, {"patch.b", &patch_b}, {"pos_embed", &pos_embed}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    BlockParams& b = blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    out.insert(out.end(), {{p + "ln1.gamma", &b.ln1_gamma}, {p + "ln1.beta", &b.ln1_beta},
                           {p + "attn.w_q", &b.w_q},        {p + "attn.b_q", &b.b_q},
                           {p + "attn.w_k", &b.w_k},        {p + "attn.b_k", &b.b_k},
                           {p + "attn.w_v", &b.w_v},        {p + "attn.b_v", &b.b_v},
                           {p + "attn.w_o", &b.w_o},        {p + "attn.b_o", &b.b_o},
                           {p + "ln2.gamma", &b.ln2_gamma}, {p + "ln2.beta", &b.ln2_beta},
                           {p + "ffn.w1", &b.ffn_w1},       {p + "ffn.b1", &b.ffn_b1},
                           {p + "ffn.w2", &b.ffn_w2},       {p + "ffn.b2", &b.ffn_b2}});
  }
  out.insert(out.end(), {{"gate.w_g", &gate.w_g},
                         {"gate.b_g", &gate.b_g},
                         {"head.w1", &head_w1},
                         {"head.b1", &head_b1},
                         {"head.w2", &head_w2},
                         {"head.b2", &head_b2}});
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Parameters::named() const {
  auto mut = const_cast<Parameters*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(name, t);
  return out;
}

namespace {

std::uint64_t name_key(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Parameters init_parameters(const PrionViTConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.embed_dim;
  Parameters p;
  p.patch_w = Tensor(Shape{config.patch_dim(), d});
  p.patch_b = Tensor(Shape{d});
  p.pos_embed = Tensor(Shape{config.num_tokens(), d});
  p.blocks.resize(config.num_blocks);
  for (BlockParams& b : p.blocks) {
    b.ln1_gamma = Tensor(Shape{d}, 1.0);
    b.ln1_beta = Tensor(Shape{d});
    b.ln2_gamma = Tensor(Shape{d}, 1.0);
    b.ln2_beta = Tensor(Shape{d});
    for (Tensor* w : {&b.w_q, &b.w_k, &b.w_v, &b.w_o}) *w = Tensor(Shape{d, d});
    for (Tensor* bias : {&b.b_q, &b.b_k, &b.b_v, &b.b_o}) *bias = Tensor(Shape{d});
    b.ffn_w1 = Tensor(Shape{d, config.ffn_dim});
    b.ffn_b1 = Tensor(Shape{config.ffn_dim});
    b.ffn_w2 = Tensor(Shape{config.ffn_dim, d});
    b.ffn_b2 = Tensor(Shape{d});
  }
  // Zero gate: the first memory steps mix memory and block output evenly.
  p.gate.w_g = Tensor(Shape{d, d});
  p.gate.b_g = Tensor(Shape{d});
  p.head_w1 = Tensor(Shape{d, config.head_hidden});
  p.head_b1 = Tensor(Shape{config.head_hidden});
  p.head_w2 = Tensor(Shape{config.head_hidden, 1});
  p.head_b2 = Tensor(Shape{1});

  // Each weight matrix draws from its own stream keyed by name, so the
  // initialization does not depend on which other parameters exist.
  for (auto& [name, t] : p.named()) {
    const bool is_weight = name == "patch.w" || name == "pos_embed" || name.find(".w_") != std::string::npos ||
                           name.find("ffn.w") != std::string::npos || name == "head.w1" || name == "head.w2";
    if (!is_weight || name.rfind("gate.", 0) == 0) continue;
    Rng rng = Rng::derive(seed, {0x494E4954ULL, name_key(name)});
    for (double& v : t->data()) v = config.init_std * rng.normal();
  }
  return p;
}

PrionViT::PrionViT(PrionViTConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(init_parameters(config_, seed)) {}

PrionViT::PrionViT(PrionViTConfig config, Parameters params, TargetScaling scaling)
    : config_(std::move(config)), params_(std::move(params)), scaling_(scaling) {
  config_.validate();
  const Parameters reference = init_parameters(config_, 0);
  auto got = params_.named();
  auto want = reference.named();
  if (got.size() != want.size()) throw std::invalid_argument("parameter set does not match config");
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].second->shape() != want[i].second->shape()) {
      throw ShapeError("parameter " + got[i].first + " has shape " + shape_str(got[i].second->shape()) + ", expected " +
                       shape_str(want[i].second->shape()));
    }
  }
}

std::size_t PrionViT::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_.named())
    if (config_.memory_enabled || name.rfind("gate.", 0) != 0) n += t->numel();
  return n;
}

BoundParams bind(Tape& tape, const Parameters& params, bool requires_grad) {
  auto leaf = [&](const Tensor& t) {
    Tensor copy = t;
    copy.set_requires_grad(requires_grad);
    return tape.leaf(std::move(copy));
  };
  BoundParams b;
  b.patch_w = leaf(params.patch_w);
  b.patch_b = leaf(params.patch_b);
  b.pos_embed = leaf(params.pos_embed);
  b.all = {b.patch_w, b.patch_b, b.pos_embed};
  for (const BlockParams& p : params.blocks) {
    BoundBlock bb{leaf(p.ln1_gamma), leaf(p.ln1_beta), leaf(p.w_q),    leaf(p.b_q),      leaf(p.w_k),
                  leaf(p.b_k),       leaf(p.w_v),      leaf(p.b_v),    leaf(p.w_o),      leaf(p.b_o),
                  leaf(p.ln2_gamma), leaf(p.ln2_beta), leaf(p.ffn_w1), leaf(p.ffn_b1),   leaf(p.ffn_w2),
                  leaf(p.ffn_b2)};
    b.all.insert(b.all.end(), {bb.ln1_gamma, bb.ln1_beta, bb.w_q, bb.b_q, bb.w_k, bb.b_k, bb.w_v, bb.b_v, bb.w_o,
                               bb.b_o, bb.ln2_gamma, bb.ln2_beta, bb.ffn_w1, bb.ffn_b1, bb.ffn_w2, bb.ffn_b2});
    b.blocks.push_back(bb);
  }
  b.w_g = leaf(params.gate.w_g);
  b.b_g = leaf(params.gate.b_g);
  b.head_w1 = leaf(params.head_w1);
  b.head_b1 = leaf(params.head_b1);
  b.head_w2 = leaf(params.head_w2);
  b.head_b2 = leaf(params.head_b2);
  b.all.insert(b.all.end(), {b.w_g, b.b_g, b.head_w1, b.head_b1, b.head_w2, b.head_b2});
  return b;
}

Tensor extract_patches(const Tensor& images, std::size_t patch_size) {
  if (images.rank() != 4) throw ShapeError("extract_patches expects B x H x W x C, got " + shape_str(images.shape()));
  const std::size_t bsz = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw ShapeError("image extents " + shape_str(images.shape()) + " are not divisible by patch size " +
                     std::to_string(patch_size));
  }
  const std::size_t gh = h / patch_size, gw = w / patch_size;
  const std::size_t pdim = patch_size * patch_size * c;
  const std::size_t row = patch_size * c;
  Tensor out(Shape{bsz, gh * gw, pdim});
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px) {
        double* dst = out.ptr() + ((b * gh + py) * gw + px) * pdim;
        for (std::size_t r = 0; r < patch_size; ++r) {
          const double* src = images.ptr() + ((b * h + py * patch_size + r) * w + px * patch_size) * c;
          std::copy_n(src, row, dst + r * row);
        }
      }
  return out;
}

Var patchify_embed(Tape& tape, const Tensor& images, const BoundParams& p, const PrionViTConfig& config) {
  if (images.rank() != 4 || images.dim(1) != config.input_size || images.dim(2) != config.input_size ||
      images.dim(3) != config.channels) {
    throw ShapeError("input batch " + shape_str(images.shape()) + " does not match config (B, " +
                     std::to_string(config.input_size) + ", " + std::to_string(config.input_size) + ", " +
                     std::to_string(config.channels) + ")");
  }
  Var patches = tape.constant(extract_patches(images, config.patch_size));
  return add(add(matmul(patches, p.patch_w), p.patch_b), p.pos_embed);
}

Var mhsa(Var x, const BoundBlock& p, std::size_t num_heads, Var* attention_out) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("mhsa expects B x N x D, got " + shape_str(s));
  const std::size_t bsz = s[0], n = s[1], d = s[2];
  if (num_heads == 0 || d % num_heads != 0) throw ShapeError("mhsa: embed dim not divisible by head count");
  const std::size_t dh = d / num_heads;
  auto heads = [&](Var t) { return swap_axes12(reshape(t, Shape{bsz, n, num_heads, dh})); };
  Var q = heads(add(matmul(x, p.w_q), p.b_q));
  Var k = heads(add(matmul(x, p.w_k), p.b_k));
  Var v = heads(add(matmul(x, p.w_v), p.b_v));
  Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var attn = softmax(scores, 3);
  if (attention_out) *attention_out = attn;
  Var ctx = reshape(swap_axes12(matmul(attn, v)), Shape{bsz, n, d});
  return add(matmul(ctx, p.w_o), p.b_o);
}

Var feed_forward(Var x, const BoundBlock& p) {
  Var h = gelu(add(matmul(x, p.ffn_w1), p.ffn_b1));
  return add(matmul(h, p.ffn_w2), p.ffn_b2);
}

Var transformer_block(Var x, const BoundBlock& p, const PrionViTConfig& config) {
  Var x1 = add(x, mhsa(layer_norm(x, p.ln1_gamma, p.ln1_beta, config.layer_norm_eps), p, config.num_heads));
  return add(x1, feed_forward(layer_norm(x1, p.ln2_gamma, p.ln2_beta, config.layer_norm_eps), p));
}

Var compute_gate(Var x, Var w_g, Var b_g) { return sigmoid(add(matmul(x, w_g), b_g)); }

namespace {

// G_b * M + (1 - G_b) * X_b for every b.
Var gated_candidates(Var memory, Var x, Var gate) {
  if (x.shape().size() != 3 || memory.shape() != Shape{x.shape()[1], x.shape()[2]} || gate.shape() != x.shape()) {
    throw ShapeError("memory " + shape_str(memory.shape()) + ", tokens " + shape_str(x.shape()) + " and gate " +
                     shape_str(gate.shape()) + " are inconsistent");
  }
  return add(mul(gate, memory), mul(one_minus(gate), x));
}

}  // namespace

Var update_memory(Var memory, Var x, Var gate) { return mean(gated_candidates(memory, x, gate), 0); }

Var broadcast_memory(Var memory, std::size_t batch) { return broadcast_batch(memory, batch); }

PrionStep prion_layer_step(Var x, Var memory, Var w_g, Var b_g, MemoryMode mode) {
  Var gate = compute_gate(x, w_g, b_g);
  Var candidates = gated_candidates(memory, x, gate);
  Var updated = mean(candidates, 0);
  if (mode == MemoryMode::Literal) return {broadcast_memory(updated, x.shape()[0]), updated};
  return {candidates, updated};
}

Var regression_head(Var x, const BoundParams& p, double dropout_rate, Rng* dropout_rng) {
  Var pooled = mean(x, 1);
  Var hidden = relu(add(matmul(pooled, p.head_w1), p.head_b1));
  if (dropout_rng && dropout_rate > 0.0) hidden = dropout(hidden, dropout_rate, *dropout_rng);
  return add(matmul(hidden, p.head_w2), p.head_b2);
}

ForwardResult forward(Tape& tape, const PrionViT& model, const Tensor& images, MemoryState& state, Mode mode,
                      Rng* dropout_rng, bool requires_grad) {
  const PrionViTConfig& cfg = model.config();
  ForwardResult result;
  result.params = bind(tape, model.params(), requires_grad);
  const BoundParams& p = result.params;

  Var x = patchify_embed(tape, images, p, cfg);
  const bool stateless = cfg.memory_persistence == MemoryPersistence::Stateless;
  const bool writes = mode == Mode::Train || cfg.inference_memory == InferenceMemory::Online;
  Var memory;
  if (cfg.memory_enabled) {
    if (stateless) {
      memory = tape.constant(Tensor(Shape{cfg.num_tokens(), cfg.embed_dim}, 0.0));
    } else {
      state.validate(cfg);
      memory = tape.constant(state.memory);
    }
  }
  const Var snapshot = memory;
  for (const BoundBlock& block : p.blocks) {
    x = transformer_block(x, block, cfg);
    if (!cfg.memory_enabled) continue;
    PrionStep step = prion_layer_step(x, writes ? memory : snapshot, p.w_g, p.b_g, cfg.memory_mode);
    x = step.x_next;
    memory = step.memory;
  }

  Rng* rng = mode == Mode::Train ? dropout_rng : nullptr;
  Var normalized = regression_head(x, p, cfg.dropout_rate, rng);
  const TargetScaling& ts = model.scaling();
  result.predictions = add_scalar(scale(normalized, ts.scale), ts.offset);

  if (cfg.memory_enabled && writes && !stateless) {
    state.memory = memory.value();
    state.memory.set_requires_grad(false);
    ++state.step_count;
  }
  return result;
}

Tensor predict(const PrionViT& model, const Tensor& images, MemoryState& state) {
  Tape tape;
  tape.set_grad_enabled(false);
  return forward(tape, model, images, state, Mode::Eval).predictions.value();
}

}  // namespace prionvit::model
