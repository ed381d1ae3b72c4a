// Copyright 2026 The mmastream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MMA_MODEL_HPP
#define MMA_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mma/checkpoint.hpp"
#include "mma/monoattn.hpp"
#include "mma/ops.hpp"
#include "mma/optim.hpp"
#include "mma/rng.hpp"
#include "mma/tensor.hpp"

namespace mma {

// Special token ids; task symbols are shifted by kTokenOffset.
constexpr int kPadId = 0;
constexpr int kSosId = 1;
constexpr int kEosId = 2;
constexpr int kTokenOffset = 3;

// Encoder self-attention restriction: a frame may attend within
// [chunk_start - left, chunk_end + right] of its own chunk of `current`
// frames. All sizes are post-stacking frames.
struct ChunkMaskConfig {
  int left = 0;
  int current = 1;
  int right = 0;
};

struct ModelConfig {
  int d_model = 64;
  int d_ff = 256;
  int H = 4;     // encoder / decoder self-attention heads
  int H_ma = 4;  // monotonic attention heads per MMA layer
  int H_ca = 1;  // chunkwise attention heads per MA head
  int w = 4;     // chunkwise attention window
  int E = 4;     // encoder layers
  int D = 4;     // decoder layers
  int D_lm = 3;  // bottom decoder layers with the MMA sub-layer pruned
  float p_hd = 0.5f;
  int frame_stack_factor = 4;
  int vocab_size = 23;  // task symbols + {pad, sos, eos}
  float label_smoothing = 0.1f;
  std::optional<ChunkMaskConfig> chunk_mask;
  float dropout = 0.1f;
  float noise_std = 1.0f;  // pre-sigmoid noise on monotonic energies, training only
  int d_in = 8;            // raw input feature dimension
  int max_positions = 1024;

  int d_k() const { return d_model / H; }
  int d_k_ma() const { return d_model / H_ma; }
  int d_c() const { return d_model / (H_ma * H_ca); }
  int n_mma_layers() const { return D - D_lm; }
  int total_ma_heads() const { return n_mma_layers() * H_ma; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

struct LinearParams {
  Tensor w;
  Tensor b;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct MhaParams {
  std::vector<Tensor> w_q, w_k, w_v;  // per head [d_model, d_k]
  Tensor w_o;                         // [d_model, d_model]
  Tensor b_o;
};

struct MmaLayerParams {
  std::vector<MonotonicHeadParams> ma;  // H_ma heads
  std::vector<ChunkHeadParams> ca;      // H_ca heads, shared across MA heads
  Tensor w_o;                           // [d_model, d_model]
  Tensor b_o;
};

struct EncLayerParams {
  LayerNormParams ln1, ln2;
  MhaParams san;
  LinearParams ff1, ff2;
};

struct DecLayerParams {
  LayerNormParams ln1;
  MhaParams san;
  bool has_mma = false;
  LayerNormParams ln2;  // only when has_mma
  MmaLayerParams mma;   // only when has_mma
  LayerNormParams ln3;
  LinearParams ff1, ff2;
};

// Stochastic inputs for one training forward. Null streams (or
// training=false) disable dropout / energy noise / HeadDrop.
struct ForwardCtx {
  bool training = false;
  RngStream* dropout = nullptr;
  RngStream* noise = nullptr;
  RngStream* headdrop = nullptr;
};

// Per-MMA-layer alignment output of a teacher-forced forward.
struct AlignmentRecord {
  int layer = 0;                // decoder layer index, 0-based
  std::vector<Tensor> alpha;    // per MA head [U, T], after HeadDrop masking
  std::vector<Tensor> p;        // per MA head selection probabilities
  std::vector<uint8_t> kept;    // HeadDrop survival per head
  float headdrop_scale = 1.0f;  // H_ma / H_ma^+
};

struct TrainForward {
  Tensor logits;  // [U, vocab]
  std::vector<AlignmentRecord> aligns;
};

class Model {
 public:
  static Model init(const ModelConfig& cfg, uint64_t seed);
  static Model from_checkpoint(const Checkpoint& ckpt);

  // Frames stacked by frame_stack_factor, projected, then E SAN+FFN layers.
  Tensor encode(const Tensor& frames, const ForwardCtx& ctx) const;

  // Teacher forcing: input [sos, y...], predicting [y..., eos].
  // `task_tokens` are unshifted task symbols.
  TrainForward decode_train(const Tensor& h, const std::vector<int>& task_tokens,
                            const ForwardCtx& ctx) const;

  Tensor loss(const Tensor& logits, const std::vector<int>& task_tokens) const;

  std::vector<NamedParam> named_params() const;
  std::vector<Tensor> param_tensors() const;
  void save(const std::string& path) const;

  const ModelConfig& config() const { return cfg_; }
  const Tensor& positional() const { return pe_; }

  // weights are public state for the incremental decoder
  Tensor embed;
  LinearParams in_proj;
  std::vector<EncLayerParams> enc;
  LayerNormParams enc_ln;
  std::vector<DecLayerParams> dec;
  LayerNormParams dec_ln;
  LinearParams out_proj;

 private:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  void build(RngStream init);

  ModelConfig cfg_;
  Tensor pe_;  // sinusoidal, not learned
};

// [T_raw, d_in] -> [ceil(T_raw/factor), factor*d_in], zero-padded tail.
Tensor stack_frames(const Tensor& frames, int factor);

// Lower-triangular allow mask (1 = may attend).
Tensor causal_mask(int n);

// Allow mask for the chunk-hopping restriction.
Tensor chunk_attention_mask(int t, const ChunkMaskConfig& cm);

std::vector<int> shift_to_model_vocab(const std::vector<int>& task_tokens);

struct TrainItem {
  Tensor frames;                // [T_raw, d_in]
  std::vector<int> task_tokens;
};

struct TrainRngs {
  RngStream dropout, noise, headdrop;
  TrainRngs(uint64_t seed)
      : dropout(seed, "dropout"), noise(seed, "noise"), headdrop(seed, "headdrop") {}
};

struct TrainStepResult {
  double loss = 0.0;
  double lr = 0.0;
  bool applied = false;  // false when non-finite grads aborted the update
};

// Forward + backward + one Adam/Noam update over the batch (token-level
// mean loss). Deterministic given the seeds in `rngs`.
TrainStepResult train_step(Model& model, AdamNoam& opt, const std::vector<TrainItem>& batch,
                           int step, TrainRngs& rngs);

}  // namespace mma

#endif  // MMA_MODEL_HPP
