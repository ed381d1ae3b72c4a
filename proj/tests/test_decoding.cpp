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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mma/decoding.hpp"
#include "testutil.hpp"

using namespace mma;
using mma::test::random_tensor;

namespace {

ModelConfig craft_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.H = 2;
  cfg.H_ma = 2;
  cfg.H_ca = 1;
  cfg.w = 2;
  cfg.E = 1;
  cfg.D = 2;
  cfg.D_lm = 1;
  cfg.p_hd = 0.0f;
  cfg.frame_stack_factor = 1;
  cfg.vocab_size = 7;
  cfg.dropout = 0.0f;
  cfg.d_in = 3;
  return cfg;
}

// Zeroing w_s makes each head's selection probability a constant sigmoid(r),
// which gives exact control over activation behavior.
Model craft_model(float r_head0, float r_head1) {
  Model m = Model::init(craft_config(), 21);
  auto& mma = m.dec[1].mma;
  for (auto& v : mma.ma[0].w_s.vec()) v = 0.0f;
  for (auto& v : mma.ma[1].w_s.vec()) v = 0.0f;
  mma.ma[0].r.vec()[0] = r_head0;
  mma.ma[1].r.vec()[0] = r_head1;
  return m;
}

BeamConfig short_beam(bool sync) {
  BeamConfig b;
  b.B = 2;
  b.eps_wait = 3;
  b.alpha_lm = 0.5f;
  b.beta_len = 1.0f;
  b.L_max = 6;
  b.head_sync = sync;
  return b;
}

struct PMatrix {
  std::vector<std::vector<float>> rows;  // [head][frame]
  float operator()(int h, int j) const { return rows[h][j]; }
};

}  // namespace

TEST_CASE("hand trace: lagging head is forced to the detected boundary") {
  // head 0 stops at frame 1 (1-based), head 1 never activates, eps_wait = 2:
  // head 1 is forced to boundary 1 upon reaching the third frame
  PMatrix p{{{0.9f, 0.9f, 0.9f, 0.9f}, {0.1f, 0.1f, 0.1f, 0.1f}}};
  std::vector<int> scan = {0, 0}, bound = {0, 0};
  std::vector<HeadOutcome> out;
  resolve_boundaries([&](int h, int j) { return p(h, j); }, 2, 4, 2, true, scan, bound, out);
  CHECK(out[0].bound == 0);
  CHECK_FALSE(out[0].forced);
  CHECK(out[0].activated);
  CHECK(out[1].bound == 0);
  CHECK(out[1].forced);
  CHECK(out[1].activated);
  CHECK(bound == std::vector<int>{0, 0});
}

TEST_CASE("always-activating heads never get forced") {
  PMatrix p{{{0.8f, 0.8f, 0.8f}, {0.9f, 0.9f, 0.9f}}};
  std::vector<int> scan = {1, 2}, bound = {1, 2};
  std::vector<HeadOutcome> out;
  resolve_boundaries([&](int h, int j) { return p(h, j); }, 2, 3, 8, true, scan, bound, out);
  CHECK(out[0].bound == 1);
  CHECK(out[1].bound == 2);
  CHECK_FALSE(out[0].forced);
  CHECK_FALSE(out[1].forced);
}

TEST_CASE("no activation leaves boundaries alone and resumes from the end") {
  PMatrix p{{{0.1f, 0.1f, 0.1f, 0.2f}, {0.0f, 0.1f, 0.3f, 0.1f}}};
  std::vector<int> scan = {1, 1}, bound = {1, 1};
  std::vector<HeadOutcome> out;
  resolve_boundaries([&](int h, int j) { return p(h, j); }, 2, 4, 2, true, scan, bound, out);
  CHECK_FALSE(out[0].activated);
  CHECK_FALSE(out[1].activated);
  CHECK(bound == std::vector<int>{1, 1});
  CHECK(scan == std::vector<int>{3, 3});
}

TEST_CASE("forcing never moves a head backwards") {
  // head 1 sits at boundary 3 already; head 0 activates at 1; eps 2 would
  // force head 1 toward 1 but the clamp keeps it at 3
  PMatrix p{{{0.0f, 0.9f, 0.0f, 0.0f, 0.0f}, {0.0f, 0.0f, 0.0f, 0.1f, 0.1f}}};
  std::vector<int> scan = {1, 3}, bound = {1, 3};
  std::vector<HeadOutcome> out;
  resolve_boundaries([&](int h, int j) { return p(h, j); }, 2, 5, 2, true, scan, bound, out);
  CHECK(out[0].bound == 1);
  CHECK(out[1].forced);
  CHECK(out[1].bound == 3);
}

TEST_CASE("standard mode scans to the end and records failures") {
  PMatrix p{{{0.1f, 0.1f, 0.9f}, {0.1f, 0.1f, 0.1f}}};
  std::vector<int> scan = {0, 0}, bound = {0, 0};
  std::vector<HeadOutcome> out;
  resolve_boundaries([&](int h, int j) { return p(h, j); }, 2, 3, 8, false, scan, bound, out);
  CHECK(out[0].activated);
  CHECK(out[0].bound == 2);
  CHECK_FALSE(out[1].activated);
  CHECK(bound == std::vector<int>{2, 0});
}

TEST_CASE("sync spread stays below eps_wait over random sequences") {
  RngStream rng(31, "rs");
  for (int trial = 0; trial < 200; ++trial) {
    const int heads = 2 + int(rng.below(4));
    const int t = 4 + int(rng.below(20));
    const int eps = 1 + int(rng.below(6));
    std::vector<int> scan(heads, 0), bound(heads, 0);
    std::vector<int> prev_bound(heads, 0);
    std::vector<HeadOutcome> out;
    for (int step = 0; step < 6; ++step) {
      PMatrix p;
      p.rows.assign(heads, std::vector<float>(t));
      for (auto& row : p.rows)
        for (auto& v : row) v = static_cast<float>(rng.uniform());
      resolve_boundaries([&](int h, int j) { return p(h, j); }, heads, t, eps, true, scan, bound,
                         out);
      bool any = false;
      int mn = 1 << 30, mx = -1;
      for (int h = 0; h < heads; ++h) {
        if (out[h].activated) {
          any = true;
          mn = std::min(mn, out[h].bound);
          mx = std::max(mx, out[h].bound);
          CHECK(out[h].bound >= prev_bound[h]);  // per-head monotonicity
          prev_bound[h] = out[h].bound;
        }
      }
      if (any) CHECK(mx - mn < eps);
    }
  }
}

TEST_CASE("prune moves eos candidates and keeps top-B") {
  std::vector<Candidate> cands(3);
  cands[0].tokens = {kSosId, 4, kEosId};
  cands[0].score = 1.0;
  cands[1].tokens = {kSosId, 4, 5};
  cands[1].score = 2.0;
  cands[2].tokens = {kSosId, 4, 6};
  cands[2].score = 0.5;
  std::vector<Candidate> beam, finished;
  prune(cands, beam, finished, 2);
  REQUIRE(finished.size() == 1);
  CHECK(finished[0].score == 1.0);
  REQUIRE(beam.size() == 2);
  CHECK(beam[0].score == 2.0);
  CHECK(beam[1].score == 0.5);

  // all candidates terminated: the beam empties
  std::vector<Candidate> all_eos(2);
  all_eos[0].tokens = {kSosId, kEosId};
  all_eos[0].score = 3.0;
  all_eos[1].tokens = {kSosId, 5, kEosId};
  all_eos[1].score = 4.0;
  beam.clear();
  finished.clear();
  prune(all_eos, beam, finished, 2);
  CHECK(beam.empty());
  CHECK(finished.size() == 2);
  CHECK(finished[0].score == 4.0);

  std::vector<Candidate> none;
  CHECK_THROWS_AS(prune(none, beam, finished, 2), std::runtime_error);
}

TEST_CASE("prune tie-break is deterministic: shorter first, then lexicographic") {
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<Candidate> cands(3);
    cands[0].tokens = {kSosId, 6, 5};
    cands[0].score = 1.0;
    cands[1].tokens = {kSosId, 5, 6};
    cands[1].score = 1.0;
    cands[2].tokens = {kSosId, 5};
    cands[2].score = 1.0;
    std::vector<Candidate> beam, finished;
    prune(cands, beam, finished, 3);
    REQUIRE(beam.size() == 3);
    CHECK(beam[0].tokens == std::vector<int>{kSosId, 5});
    CHECK(beam[1].tokens == std::vector<int>{kSosId, 5, 6});
    CHECK(beam[2].tokens == std::vector<int>{kSosId, 6, 5});
  }
}

TEST_CASE("null LM returns a normalized log-distribution") {
  NullLM lm(23);
  auto v = lm.score_next({kSosId});
  double lse = 0.0;
  for (float x : v) lse += std::exp(double(x));
  CHECK(std::abs(std::log(lse)) < 1e-5);
}

TEST_CASE("always-activating model: sync and standard decode identically") {
  Model m = craft_model(5.0f, 5.0f);
  RngStream rng(41, "f");
  Tensor frames = random_tensor({10, 3}, rng);
  NullLM lm(m.config().vocab_size);
  DecodedUtterance sync = decode_utterance(m, frames, short_beam(true), lm, "u0");
  DecodedUtterance std_ = decode_utterance(m, frames, short_beam(false), lm, "u0");
  CHECK(sync.task_tokens == std_.task_tokens);
  CHECK(std::abs(sync.score - std_.score) <= 1e-6);
  CHECK(sync.forced_count == 0);
  CHECK(std_.forced_count == 0);
  for (const auto& s : sync.boundary_log)
    for (const auto& ev : s.events) {
      CHECK(ev.activated);
      CHECK_FALSE(ev.forced);
    }
  CHECK(sync.streamable);
}

TEST_CASE("dead head under standard decode leaves sentinels; sync forces it") {
  Model m = craft_model(5.0f, -50.0f);
  RngStream rng(43, "f");
  Tensor frames = random_tensor({8, 3}, rng);
  NullLM lm(m.config().vocab_size);

  DecodedUtterance std_ = decode_utterance(m, frames, short_beam(false), lm, "u1");
  bool saw_sentinel = false;
  for (const auto& s : std_.boundary_log)
    for (const auto& ev : s.events)
      if (ev.head == 1 && ev.layer == 1) {
        CHECK(ev.frame == std_.frames + 1);
        CHECK_FALSE(ev.activated);
        saw_sentinel = true;
      }
  CHECK(saw_sentinel);
  CHECK_FALSE(std_.streamable);

  DecodedUtterance sync = decode_utterance(m, frames, short_beam(true), lm, "u1");
  CHECK(sync.forced_count > 0);
  for (const auto& s : sync.boundary_log)
    for (const auto& ev : s.events) CHECK(ev.activated);
  CHECK(sync.streamable);
}

TEST_CASE("encoder consumption stays within the wait bound under sync") {
  Model m = craft_model(5.0f, -50.0f);
  RngStream rng(44, "f");
  Tensor frames = random_tensor({12, 3}, rng);
  NullLM lm(m.config().vocab_size);
  BeamConfig bc = short_beam(true);
  DecodedUtterance rec = decode_utterance(m, frames, bc, lm, "u2");
  int max_frame = 0;
  for (size_t s = 0; s < rec.beam_log.size(); ++s) {
    for (const auto& cand : rec.beam_log[s].candidates)
      for (const auto& ev : cand.events)
        if (ev.activated) max_frame = std::max(max_frame, ev.frame);
    CHECK(rec.beam_log[s].hwm <= max_frame + bc.eps_wait);
  }
}

TEST_CASE("beam dominance and score decomposition") {
  Model m = craft_model(5.0f, 4.0f);
  RngStream rng(47, "f");
  Tensor frames = random_tensor({9, 3}, rng);
  NullLM lm(m.config().vocab_size);
  BeamConfig b1 = short_beam(true);
  b1.B = 1;
  b1.L_max = 10;
  BeamConfig b2 = b1;
  b2.B = 2;
  DecodedUtterance r1 = decode_utterance(m, frames, b1, lm, "u3");
  DecodedUtterance r2 = decode_utterance(m, frames, b2, lm, "u3");
  CHECK(r2.score >= r1.score - 1e-9);

  const int emitted = static_cast<int>(r2.task_tokens.size()) + (r2.completed ? 1 : 0);
  const double recon = r2.log_p_mma + b2.alpha_lm * r2.log_p_lm + b2.beta_len * emitted;
  CHECK(std::abs(recon - r2.score) < 1e-9);
}

TEST_CASE("decode is deterministic and round-trips through jsonl") {
  Model m = craft_model(5.0f, 4.0f);
  RngStream rng(53, "f");
  Tensor frames = random_tensor({8, 3}, rng);
  NullLM lm(m.config().vocab_size);
  DecodedUtterance a = decode_utterance(m, frames, short_beam(true), lm, "u4");
  DecodedUtterance b = decode_utterance(m, frames, short_beam(true), lm, "u4");
  CHECK(decode_to_json(a).dump() == decode_to_json(b).dump());

  const std::string path = std::filesystem::temp_directory_path() / "mma_dec_rt.jsonl";
  write_decodes_jsonl({a}, path);
  auto loaded = read_decodes_jsonl(path);
  REQUIRE(loaded.size() == 1);
  CHECK(decode_to_json(loaded[0]).dump() == decode_to_json(a).dump());
  std::filesystem::remove(path);
}

TEST_CASE("per-head boundaries in the winning path never decrease") {
  Model m = craft_model(1.0f, 0.5f);  // p near threshold, boundaries advance
  RngStream rng(59, "f");
  Tensor frames = random_tensor({16, 3}, rng);
  NullLM lm(m.config().vocab_size);
  BeamConfig bc = short_beam(true);
  bc.L_max = 8;
  DecodedUtterance rec = decode_utterance(m, frames, bc, lm, "u5");
  std::map<std::pair<int, int>, int> last;
  for (const auto& s : rec.boundary_log) {
    for (const auto& ev : s.events) {
      if (!ev.activated) continue;
      auto key = std::make_pair(ev.layer, ev.head);
      auto it = last.find(key);
      if (it != last.end()) CHECK(ev.frame >= it->second);
      last[key] = ev.frame;
    }
  }
}
