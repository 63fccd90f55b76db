#pragma once

// Vision Transformer regressor with an optional gated persistent memory
// ("prion memory") between transformer blocks.
//
// With memory enabled, after every block l (including the last):
//
//   G   = sigmoid(X W_g + b_g)                      gate, entries in (0, 1)
//   M_b = G_b * M + (1 - G_b) * X_b                 per-sample candidate
//   M'  = mean_b M_b                                shared memory update
//
// and the next block consumes either the per-sample candidates M_b
// (MemoryMode::PerSample) or M' broadcast over the batch
// (MemoryMode::Literal). One memory M and one gate (W_g, b_g) are shared by
// all blocks. The memory entering a forward pass is a constant: gradients
// flow through every memory step inside the pass but never into earlier
// passes.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prionvit/ops.hpp"
#include "prionvit/rng.hpp"
#include "prionvit/tape.hpp"
#include "prionvit/tensor.hpp"

namespace prionvit::model {

enum class MemoryMode { PerSample, Literal };
enum class MemoryPersistence { Stateful, Stateless };
enum class InferenceMemory { Frozen, Online };
enum class Mode { Train, Eval };

struct PrionViTConfig {
  std::size_t input_size = 128;
  std::size_t patch_size = 16;
  std::size_t channels = 3;
  std::size_t embed_dim = 64;
  std::size_t num_blocks = 4;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t head_hidden = 2048;
  double dropout_rate = 0.5;
  double layer_norm_eps = 1e-6;
  double init_std = 0.02;
  bool memory_enabled = true;
  MemoryMode memory_mode = MemoryMode::PerSample;
  MemoryPersistence memory_persistence = MemoryPersistence::Stateful;
  InferenceMemory inference_memory = InferenceMemory::Frozen;

  void validate() const;
  std::size_t grid() const { return input_size / patch_size; }
  std::size_t num_tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / num_heads; }

  // input 32, patch 16, D 8, L 2, heads 2, ffn 16, head_hidden 8.
  static PrionViTConfig tiny();

  friend bool operator==(const PrionViTConfig&, const PrionViTConfig&) = default;
};

std::string to_string(MemoryMode mode);
std::string to_string(MemoryPersistence persistence);
std::string to_string(InferenceMemory memory);
MemoryMode parse_memory_mode(const std::string& text);
MemoryPersistence parse_memory_persistence(const std::string& text);
InferenceMemory parse_inference_memory(const std::string& text);

struct MemoryState {
  Tensor memory;  // N x D
  std::uint64_t step_count = 0;

  static MemoryState zeros(const PrionViTConfig& config);
  void validate(const PrionViTConfig& config) const;
};

struct GateParams {
  Tensor w_g;  // D x D
  Tensor b_g;  // D
};

struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct Parameters {
  Tensor patch_w;    // patch_dim x D
  Tensor patch_b;    // D
  Tensor pos_embed;  // N x D
  std::vector<BlockParams> blocks;
  GateParams gate;
  Tensor head_w1, head_b1;  // D x head_hidden, head_hidden
  Tensor head_w2, head_b2;  // head_hidden x 1, 1

  // Stable order; names are unique.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

// Predictions are head_output * scale + offset. Set from training labels so
// the network works in standardized units.
struct TargetScaling {
  double offset = 0.0;
  double scale = 1.0;
  friend bool operator==(const TargetScaling&, const TargetScaling&) = default;
};

Parameters init_parameters(const PrionViTConfig& config, std::uint64_t seed);

class PrionViT {
 public:
  PrionViT(PrionViTConfig config, std::uint64_t seed);
  PrionViT(PrionViTConfig config, Parameters params, TargetScaling scaling = {});

  const PrionViTConfig& config() const { return config_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  const TargetScaling& scaling() const { return scaling_; }
  void set_scaling(TargetScaling scaling) { scaling_ = scaling; }
  std::size_t parameter_count() const;

 private:
  PrionViTConfig config_;
  Parameters params_;
  TargetScaling scaling_;
};

// Parameters as tape leaves.
struct BoundBlock {
  Var ln1_gamma, ln1_beta;
  Var w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Var ln2_gamma, ln2_beta;
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct BoundParams {
  Var patch_w, patch_b, pos_embed;
  std::vector<BoundBlock> blocks;
  Var w_g, b_g;
  Var head_w1, head_b1, head_w2, head_b2;
  // Same order as Parameters::named().
  std::vector<Var> all;
};

BoundParams bind(Tape& tape, const Parameters& params, bool requires_grad);

// B x H x W x C -> B x N x (P*P*C); patches in row-major grid order, each
// flattened as (row, col, channel).
Tensor extract_patches(const Tensor& images, std::size_t patch_size);

Var patchify_embed(Tape& tape, const Tensor& images, const BoundParams& p, const PrionViTConfig& config);

// If attention_out is non-null it receives the B x heads x N x N weights.
Var mhsa(Var x, const BoundBlock& p, std::size_t num_heads, Var* attention_out = nullptr);

Var feed_forward(Var x, const BoundBlock& p);

// X1 = X + MHSA(LN(X)); X2 = X1 + FFN(LN(X1)).
Var transformer_block(Var x, const BoundBlock& p, const PrionViTConfig& config);

Var compute_gate(Var x, Var w_g, Var b_g);
Var update_memory(Var memory, Var x, Var gate);
Var broadcast_memory(Var memory, std::size_t batch);

struct PrionStep {
  Var x_next;  // B x N x D
  Var memory;  // N x D
};
PrionStep prion_layer_step(Var x, Var memory, Var w_g, Var b_g, MemoryMode mode);

// Token mean -> dense + ReLU -> dropout (train only) -> dense. Returns B x 1
// in standardized units; apply TargetScaling for degrees.
Var regression_head(Var x, const BoundParams& p, double dropout_rate, Rng* dropout_rng);

struct ForwardResult {
  Var predictions;  // B x 1, degrees C
  BoundParams params;
};

// Runs one forward pass and updates `state` according to the memory policy:
// written in train mode (stateful), or in eval mode only with online
// inference memory. With frozen inference memory every block reads the
// incoming snapshot and nothing is written. Train mode applies dropout when
// dropout_rng is provided.
ForwardResult forward(Tape& tape, const PrionViT& model, const Tensor& images, MemoryState& state, Mode mode,
                      Rng* dropout_rng = nullptr, bool requires_grad = false);

// Convenience: eval-mode predictions as a plain B x 1 tensor.
Tensor predict(const PrionViT& model, const Tensor& images, MemoryState& state);

}  // namespace prionvit::model
