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

#ifndef MMA_DECODING_HPP
#define MMA_DECODING_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mma/model.hpp"

namespace mma {

struct BeamConfig {
  int B = 10;            // beam width
  int eps_wait = 8;      // wait threshold, frames
  float alpha_lm = 0.5f; // LM weight
  float beta_len = 2.0f; // length bonus per emitted token
  int L_max = 200;
  bool head_sync = true; // forced activation on/off
  // a hypothesis may finish only when logp(eos) >= eos_threshold * best
  // extension logp; keeps the finished set from filling with premature
  // eos candidates. 0 disables the gate.
  float eos_threshold = 1.5f;

  void validate() const;
};

void to_json(nlohmann::json& j, const BeamConfig& cfg);
void from_json(const nlohmann::json& j, BeamConfig& cfg);

// Pluggable shallow-fusion scorer. score_next returns a log-distribution
// over the model vocabulary given the emitted prefix (model-vocab ids,
// starting with sos).
class LanguageModelInterface {
 public:
  virtual ~LanguageModelInterface() = default;
  virtual std::vector<float> score_next(const std::vector<int>& prefix) const = 0;
};

class NullLM final : public LanguageModelInterface {
 public:
  explicit NullLM(int vocab_size) : vocab_size_(vocab_size) {}
  std::vector<float> score_next(const std::vector<int>&) const override;

 private:
  int vocab_size_;
};

// One (layer, head) boundary outcome at one output step. Frames are 1-based;
// frame == T+1 is the sentinel for a head that scanned out without
// activating.
struct BoundaryEvent {
  int layer = 0;  // decoder layer index, 0-based
  int head = 0;
  int frame = 0;
  bool forced = false;
  bool activated = false;
};

struct StepLog {
  std::vector<BoundaryEvent> events;  // one per (MMA layer, MA head)
};

struct BeamStepLog {
  int hwm = 0;  // encoder frames consumed after this step (1-based count)
  std::vector<StepLog> candidates;  // one per hypothesis evaluated this step
};

struct DecodedUtterance {
  std::string id;
  std::vector<int> task_tokens;  // best hypothesis, task symbols, no sos/eos
  double score = 0.0;
  double log_p_mma = 0.0;
  double log_p_lm = 0.0;
  std::vector<StepLog> boundary_log;  // best hypothesis, one entry per step
  std::vector<BeamStepLog> beam_log;  // all evaluated candidates per step
  int forced_count = 0;
  bool streamable = false;
  bool completed = true;  // false: nothing reached eos by L_max
  int frames = 0;         // encoder length T, post-stacking
};

nlohmann::json decode_to_json(const DecodedUtterance& d);
DecodedUtterance decode_from_json(const nlohmann::json& j);
void write_decodes_jsonl(const std::vector<DecodedUtterance>& ds, const std::string& path);
std::vector<DecodedUtterance> read_decodes_jsonl(const std::string& path);

// Head-synchronous (or, with cfg.head_sync=false, standard) beam search over
// one utterance. The model runs in test mode: hard boundaries, no noise, no
// HeadDrop. Decoder self-attention state is cached per hypothesis and the
// beam is evaluated as a batch each step.
DecodedUtterance decode_utterance(const Model& model, const Tensor& frames,
                                  const BeamConfig& cfg, const LanguageModelInterface& lm,
                                  const std::string& id);

// Same, but starting from precomputed encoder outputs h [T, d_model].
DecodedUtterance decode_encoded(const Model& model, const Tensor& h, const BeamConfig& cfg,
                                const LanguageModelInterface& lm, const std::string& id);

struct HeadOutcome {
  int bound = -1;  // 0-based frame
  bool forced = false;
  bool activated = false;
};

// Boundary resolution for one MMA layer at one output step. Heads advance
// over frames in lockstep from their scan positions; each stops at its first
// p >= 0.5. In sync mode the wait window is anchored at the step's earliest
// natural activation: frames past (first + eps_wait - 1) are not examined,
// and heads still unresolved there are forced to the rightmost boundary of
// the step (clamped so a head never moves backwards). That anchoring keeps
// the within-layer spread strictly below eps_wait. If nothing activates by
// the last frame, the layer attends nothing and heads resume scanning from
// the last frame next step. In standard mode each head just scans to the
// end independently and contributes nothing when it fails.
void resolve_boundaries(const std::function<float(int, int)>& p, int n_heads, int t_frames,
                        int eps_wait, bool sync, std::vector<int>& scan_from,
                        std::vector<int>& boundary, std::vector<HeadOutcome>& out);

// Throws if any step of any candidate shows a within-layer spread of
// activated boundaries >= eps_wait. decode_utterance runs this on every
// head-synchronous decode.
void assert_latency_bound(const DecodedUtterance& d, int eps_wait);

// Deterministic pruning: eos-terminated candidates move to `finished`
// (best-B kept); remaining top-B by score form the next beam. Ties break by
// shorter token sequence, then lexicographic token order.
struct Candidate {
  std::vector<int> tokens;  // model vocab, with sos
  double score = 0.0;
  int parent = -1;
  int token = -1;  // proposed extension
  double lp_mma = 0.0, lp_lm = 0.0;
};
void prune(std::vector<Candidate>& candidates, std::vector<Candidate>& beam,
           std::vector<Candidate>& finished, int b);

}  // namespace mma

#endif  // MMA_DECODING_HPP
