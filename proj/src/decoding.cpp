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

#include "mma/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "mma/kernels.hpp"

namespace mma {

void BeamConfig::validate() const {
  if (B < 1) throw std::invalid_argument("beam: B must be >= 1");
  if (eps_wait < 1) throw std::invalid_argument("beam: eps_wait must be >= 1");
  if (L_max < 1) throw std::invalid_argument("beam: L_max must be >= 1");
}

void to_json(nlohmann::json& j, const BeamConfig& cfg) {
  j = {{"B", cfg.B},           {"eps_wait", cfg.eps_wait}, {"alpha_lm", cfg.alpha_lm},
       {"beta_len", cfg.beta_len}, {"L_max", cfg.L_max},   {"head_sync", cfg.head_sync},
       {"eos_threshold", cfg.eos_threshold}};
}

void from_json(const nlohmann::json& j, BeamConfig& cfg) {
  j.at("B").get_to(cfg.B);
  j.at("eps_wait").get_to(cfg.eps_wait);
  j.at("alpha_lm").get_to(cfg.alpha_lm);
  j.at("beta_len").get_to(cfg.beta_len);
  j.at("L_max").get_to(cfg.L_max);
  if (j.contains("head_sync")) j.at("head_sync").get_to(cfg.head_sync);
  if (j.contains("eos_threshold")) j.at("eos_threshold").get_to(cfg.eos_threshold);
}

std::vector<float> NullLM::score_next(const std::vector<int>&) const {
  return std::vector<float>(
      vocab_size_, static_cast<float>(-std::log(static_cast<double>(vocab_size_))));
}

namespace {

using kern::FloatMat;

// Encoder-side projections for every MMA layer, materialized frame by frame
// as the scan advances. hwm() is the number of encoder frames the decoder
// has consumed so far.
class EncSideCache {
 public:
  EncSideCache(const Model& model, const Tensor& h) : model_(model), h_(h), t_(h.rows()) {
    const auto& cfg = model.config();
    const int slots = cfg.n_mma_layers();
    mono_keys_.resize(slots);
    chunk_keys_.resize(slots);
    chunk_vals_.resize(slots);
    for (int s = 0; s < slots; ++s) {
      mono_keys_[s].assign(cfg.H_ma, FloatMat(t_, cfg.d_k_ma()));
      chunk_keys_[s].assign(cfg.H_ca, FloatMat(t_, cfg.d_c()));
      chunk_vals_[s].assign(cfg.H_ca, FloatMat(t_, cfg.d_c()));
    }
  }

  void ensure(int j) {
    const auto& cfg = model_.config();
    for (int f = materialized_; f <= j && f < t_; ++f) {
      const float* hrow = h_.data() + static_cast<size_t>(f) * cfg.d_model;
      int slot = 0;
      for (int l = cfg.D_lm; l < cfg.D; ++l, ++slot) {
        const auto& mma = model_.dec[l].mma;
        for (int m = 0; m < cfg.H_ma; ++m)
          kern::matvec_acc(hrow, mma.ma[m].w_h.data(), mono_keys_[slot][m].row(f), cfg.d_model,
                           cfg.d_k_ma());
        for (int c = 0; c < cfg.H_ca; ++c) {
          kern::matvec_acc(hrow, mma.ca[c].w_k.data(), chunk_keys_[slot][c].row(f), cfg.d_model,
                           cfg.d_c());
          kern::matvec_acc(hrow, mma.ca[c].w_v.data(), chunk_vals_[slot][c].row(f), cfg.d_model,
                           cfg.d_c());
        }
      }
      materialized_ = f + 1;
    }
  }

  int hwm() const { return materialized_; }
  int frames() const { return t_; }
  const FloatMat& mono_keys(int slot, int head) const { return mono_keys_[slot][head]; }
  const FloatMat& chunk_keys(int slot, int c) const { return chunk_keys_[slot][c]; }
  const FloatMat& chunk_vals(int slot, int c) const { return chunk_vals_[slot][c]; }

 private:
  const Model& model_;
  const Tensor& h_;
  int t_;
  int materialized_ = 0;
  std::vector<std::vector<FloatMat>> mono_keys_, chunk_keys_, chunk_vals_;
};

struct Hyp {
  std::vector<int> tokens{kSosId};
  double lp_mma = 0.0, lp_lm = 0.0;
  int emitted = 0;
  // per decoder layer: appended K/V rows (cols = H * d_k), one row per step
  std::vector<std::vector<float>> kc, vc;
  // per MMA slot, per MA head
  std::vector<std::vector<int>> boundary;   // 0-based; starts at frame 0
  std::vector<std::vector<int>> scan_from;  // 0-based scan resume point
  std::vector<StepLog> blog;
  int forced_count = 0;

  double score(const BeamConfig& cfg) const {
    return lp_mma + cfg.alpha_lm * lp_lm + cfg.beta_len * emitted;
  }
};

Hyp make_root(const Model& model) {
  const auto& cfg = model.config();
  Hyp h;
  h.kc.assign(cfg.D, {});
  h.vc.assign(cfg.D, {});
  h.boundary.assign(cfg.n_mma_layers(), std::vector<int>(cfg.H_ma, 0));
  h.scan_from.assign(cfg.n_mma_layers(), std::vector<int>(cfg.H_ma, 0));
  return h;
}

}  // namespace

void resolve_boundaries(const std::function<float(int, int)>& p, int n_heads, int t_frames,
                        int eps_wait, bool sync, std::vector<int>& scan_from,
                        std::vector<int>& boundary, std::vector<HeadOutcome>& out) {
  out.assign(n_heads, HeadOutcome{});
  if (!sync) {
    for (int h = 0; h < n_heads; ++h) {
      for (int j = scan_from[h]; j < t_frames; ++j) {
        if (p(h, j) >= 0.5f) {
          out[h] = {j, false, true};
          break;
        }
      }
      if (out[h].activated) {
        boundary[h] = out[h].bound;
        scan_from[h] = out[h].bound;
      }
      // non-activated heads keep their state and rescan next step
    }
    return;
  }

  std::vector<int> natural(n_heads, -1);
  int n_first = -1;
  int t_tail = -1;
  int n_resolved = 0;
  for (int j = 0; j < t_frames && n_resolved < n_heads; ++j) {
    if (n_first >= 0 && j > n_first + eps_wait - 1) break;
    for (int h = 0; h < n_heads; ++h) {
      if (natural[h] < 0 && scan_from[h] <= j) {
        if (p(h, j) >= 0.5f) {
          natural[h] = j;
          ++n_resolved;
          if (n_first < 0) n_first = j;
          t_tail = std::max(t_tail, j);
        }
      }
    }
  }
  if (n_first < 0) {
    // nothing activated: the layer attends nothing this step and all heads
    // resume next step from the last frame
    for (int h = 0; h < n_heads; ++h) {
      out[h] = {-1, false, false};
      scan_from[h] = t_frames - 1;
    }
    return;
  }
  for (int h = 0; h < n_heads; ++h) {
    if (natural[h] >= 0) {
      out[h] = {natural[h], false, true};
    } else {
      out[h] = {std::max(t_tail, boundary[h]), true, true};
    }
    boundary[h] = out[h].bound;
    scan_from[h] = out[h].bound;
  }
}

namespace {

void layer_norm_rows(const FloatMat& x, const LayerNormParams& ln, FloatMat& out) {
  out.rows = x.rows;
  out.cols = x.cols;
  out.v.resize(x.v.size());
  for (int i = 0; i < x.rows; ++i)
    kern::layer_norm_row(x.row(i), ln.gain.data(), ln.bias.data(), out.row(i), x.cols, 1e-6f);
}

// out[b] = x * w + bias (bias may be null)
FloatMat linear_rows(const FloatMat& x, const Tensor& w, const Tensor* bias) {
  FloatMat out(x.rows, w.cols());
  kern::matmul(x.v.data(), w.data(), out.v.data(), x.rows, x.cols, w.cols());
  if (bias != nullptr) {
    for (int i = 0; i < out.rows; ++i) {
      float* row = out.row(i);
      for (int j = 0; j < out.cols; ++j) row[j] += bias->data()[j];
    }
  }
  return out;
}

void add_rows(FloatMat& x, const FloatMat& y) {
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += y.v[i];
}

// Evaluates one output step for every hypothesis in the beam (projections
// batched over the beam), mutating per-hypothesis caches, boundaries, and
// step logs. Returns per-hypothesis log-softmaxed vocab rows.
FloatMat eval_step(const Model& model, std::vector<Hyp>& beam, EncSideCache& enc,
                   const BeamConfig& bcfg) {
  const auto& cfg = model.config();
  const int nb = static_cast<int>(beam.size());
  const int d = cfg.d_model;
  const int t_frames = enc.frames();
  const float emb_scale = static_cast<float>(std::sqrt(static_cast<double>(d)));

  FloatMat x(nb, d);
  for (int b = 0; b < nb; ++b) {
    const int tok = beam[b].tokens.back();
    const int pos = static_cast<int>(beam[b].tokens.size()) - 1;
    const float* emb = model.embed.data() + static_cast<size_t>(tok) * d;
    const float* pe = model.positional().data() + static_cast<size_t>(pos) * d;
    float* row = x.row(b);
    for (int j = 0; j < d; ++j) row[j] = emb[j] * emb_scale + pe[j];
  }

  FloatMat a, ctx(nb, d), part;
  const int d_k = cfg.d_k();
  const float inv_sqrt_dk = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d_k)));

  for (int l = 0; l < cfg.D; ++l) {
    const auto& lay = model.dec[l];

    // self-attention over the per-hypothesis cache
    layer_norm_rows(x, lay.ln1, a);
    std::fill(ctx.v.begin(), ctx.v.end(), 0.0f);
    for (int h = 0; h < cfg.H; ++h) {
      FloatMat q = linear_rows(a, lay.san.w_q[h], nullptr);
      FloatMat k = linear_rows(a, lay.san.w_k[h], nullptr);
      FloatMat v = linear_rows(a, lay.san.w_v[h], nullptr);
      for (int b = 0; b < nb; ++b) {
        auto& kcache = beam[b].kc[l];
        auto& vcache = beam[b].vc[l];
        if (h == 0) {
          kcache.resize(kcache.size() + static_cast<size_t>(cfg.H) * d_k);
          vcache.resize(vcache.size() + static_cast<size_t>(cfg.H) * d_k);
        }
        const int steps = static_cast<int>(kcache.size() / (static_cast<size_t>(cfg.H) * d_k));
        float* krow = kcache.data() + static_cast<size_t>(steps - 1) * cfg.H * d_k +
                      static_cast<size_t>(h) * d_k;
        float* vrow = vcache.data() + static_cast<size_t>(steps - 1) * cfg.H * d_k +
                      static_cast<size_t>(h) * d_k;
        std::copy(k.row(b), k.row(b) + d_k, krow);
        std::copy(v.row(b), v.row(b) + d_k, vrow);

        std::vector<float> scores(steps), probs(steps);
        for (int s = 0; s < steps; ++s) {
          const float* ks = kcache.data() + static_cast<size_t>(s) * cfg.H * d_k +
                            static_cast<size_t>(h) * d_k;
          scores[s] = static_cast<float>(kern::dot(q.row(b), ks, d_k)) * inv_sqrt_dk;
        }
        kern::softmax_row(scores.data(), nullptr, probs.data(), steps);
        float* dst = ctx.row(b) + static_cast<size_t>(h) * d_k;
        for (int s = 0; s < steps; ++s) {
          const float* vs = vcache.data() + static_cast<size_t>(s) * cfg.H * d_k +
                            static_cast<size_t>(h) * d_k;
          const float pv = probs[s];
          for (int j = 0; j < d_k; ++j) dst[j] += pv * vs[j];
        }
      }
    }
    add_rows(x, linear_rows(ctx, lay.san.w_o, &lay.san.b_o));

    if (lay.has_mma) {
      const int slot = l - cfg.D_lm;
      const int d_km = cfg.d_k_ma();
      const int d_c = cfg.d_c();
      const float inv_sqrt_ma = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d_km)));
      const float inv_sqrt_ca = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d_c)));
      layer_norm_rows(x, lay.ln2, a);
      std::vector<FloatMat> qm, qc;
      for (int m = 0; m < cfg.H_ma; ++m) qm.push_back(linear_rows(a, lay.mma.ma[m].w_s, nullptr));
      for (int c = 0; c < cfg.H_ca; ++c) qc.push_back(linear_rows(a, lay.mma.ca[c].w_q, nullptr));

      FloatMat cat(nb, d);
      std::vector<HeadOutcome> outc;
      for (int b = 0; b < nb; ++b) {
        auto p_eval = [&](int m, int j) -> float {
          enc.ensure(j);
          const double e = kern::dot(qm[m].row(b), enc.mono_keys(slot, m).row(j), d_km) *
                               inv_sqrt_ma +
                           lay.mma.ma[m].r.item();
          return kern::sigmoidf(static_cast<float>(e));
        };
        resolve_boundaries(p_eval, cfg.H_ma, t_frames, bcfg.eps_wait, bcfg.head_sync,
                           beam[b].scan_from[slot], beam[b].boundary[slot], outc);

        StepLog& slog = beam[b].blog.back();
        for (int m = 0; m < cfg.H_ma; ++m) {
          BoundaryEvent ev;
          ev.layer = l;
          ev.head = m;
          ev.forced = outc[m].forced;
          ev.activated = outc[m].activated;
          ev.frame = outc[m].activated ? outc[m].bound + 1 : t_frames + 1;
          slog.events.push_back(ev);
          if (ev.forced) ++beam[b].forced_count;
        }

        for (int m = 0; m < cfg.H_ma; ++m) {
          for (int c = 0; c < cfg.H_ca; ++c) {
            float* dst = cat.row(b) + static_cast<size_t>(m * cfg.H_ca + c) * d_c;
            if (!outc[m].activated) continue;  // zero context for silent heads
            const int t_b = outc[m].bound;
            const int lo = std::max(0, t_b - cfg.w + 1);
            const int n = t_b - lo + 1;
            std::vector<float> u(n), wts(n);
            for (int j = 0; j < n; ++j)
              u[j] = static_cast<float>(
                  kern::dot(qc[c].row(b), enc.chunk_keys(slot, c).row(lo + j), d_c) *
                  inv_sqrt_ca);
            kern::softmax_row(u.data(), nullptr, wts.data(), n);
            for (int j = 0; j < n; ++j) {
              const float* vrow = enc.chunk_vals(slot, c).row(lo + j);
              for (int e = 0; e < d_c; ++e) dst[e] += wts[j] * vrow[e];
            }
          }
        }
      }
      add_rows(x, linear_rows(cat, lay.mma.w_o, &lay.mma.b_o));
    }

    layer_norm_rows(x, lay.ln3, a);
    FloatMat f1 = linear_rows(a, lay.ff1.w, &lay.ff1.b);
    for (auto& vv : f1.v) vv = vv > 0.0f ? vv : 0.0f;
    add_rows(x, linear_rows(f1, lay.ff2.w, &lay.ff2.b));
  }

  layer_norm_rows(x, model.dec_ln, a);
  FloatMat logits = linear_rows(a, model.out_proj.w, &model.out_proj.b);
  for (int b = 0; b < nb; ++b) kern::log_softmax_row(logits.row(b), logits.row(b), logits.cols);
  return logits;
}

bool candidate_better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

void prune(std::vector<Candidate>& candidates, std::vector<Candidate>& beam,
           std::vector<Candidate>& finished, int b) {
  if (candidates.empty()) throw std::runtime_error("prune: empty candidate set");
  std::sort(candidates.begin(), candidates.end(), candidate_better);
  beam.clear();
  for (const auto& c : candidates) {
    if (!c.tokens.empty() && c.tokens.back() == kEosId) {
      finished.push_back(c);
    } else if (static_cast<int>(beam.size()) < b) {
      beam.push_back(c);
    }
  }
  std::sort(finished.begin(), finished.end(), candidate_better);
  if (static_cast<int>(finished.size()) > b) finished.resize(b);
}

DecodedUtterance decode_utterance(const Model& model, const Tensor& frames,
                                  const BeamConfig& cfg, const LanguageModelInterface& lm,
                                  const std::string& id) {
  NoGradGuard ng;
  ForwardCtx fctx;  // test mode
  return decode_encoded(model, model.encode(frames, fctx), cfg, lm, id);
}

DecodedUtterance decode_encoded(const Model& model, const Tensor& h, const BeamConfig& cfg,
                                const LanguageModelInterface& lm, const std::string& id) {
  cfg.validate();
  NoGradGuard ng;
  const auto& mcfg = model.config();

  EncSideCache enc(model, h);

  std::vector<Hyp> beam;
  beam.push_back(make_root(model));

  struct FinishedHyp {
    Candidate cand;
    std::vector<StepLog> blog;
    int forced_count = 0;
  };
  std::vector<FinishedHyp> finished_full;
  std::vector<Candidate> finished;

  DecodedUtterance rec;
  rec.id = id;
  rec.frames = h.rows();

  for (int step = 1; step <= cfg.L_max && !beam.empty(); ++step) {
    for (auto& hyp : beam) hyp.blog.emplace_back();
    FloatMat logp = eval_step(model, beam, enc, cfg);

    BeamStepLog bstep;
    bstep.hwm = enc.hwm();
    for (auto& hyp : beam) bstep.candidates.push_back(hyp.blog.back());
    rec.beam_log.push_back(std::move(bstep));

    std::vector<Candidate> candidates;
    for (int b = 0; b < static_cast<int>(beam.size()); ++b) {
      const std::vector<float> lm_logp = lm.score_next(beam[b].tokens);
      if (static_cast<int>(lm_logp.size()) != mcfg.vocab_size)
        throw std::runtime_error("LM returned a vector of the wrong size");
      float best_logp = -std::numeric_limits<float>::infinity();
      for (int v = 0; v < mcfg.vocab_size; ++v) {
        if (v == kPadId || v == kSosId) continue;
        best_logp = std::max(best_logp, logp.at(b, v));
      }
      std::vector<int> order;
      for (int v = 0; v < mcfg.vocab_size; ++v) {
        if (v == kPadId || v == kSosId) continue;
        if (v == kEosId && cfg.eos_threshold > 0.0f &&
            logp.at(b, v) < cfg.eos_threshold * best_logp)
          continue;
        order.push_back(v);
      }
      auto ext_score = [&](int v) {
        const double mmas = beam[b].lp_mma + logp.at(b, v);
        const double lms = beam[b].lp_lm + lm_logp[v];
        return mmas + cfg.alpha_lm * lms + cfg.beta_len * (beam[b].emitted + 1);
      };
      const int topk = std::min<int>(cfg.B, static_cast<int>(order.size()));
      std::partial_sort(order.begin(), order.begin() + topk, order.end(),
                        [&](int va, int vb) {
                          const double sa = ext_score(va), sb = ext_score(vb);
                          if (sa != sb) return sa > sb;
                          return va < vb;
                        });
      for (int i = 0; i < topk; ++i) {
        const int v = order[i];
        Candidate c;
        c.parent = b;
        c.token = v;
        c.lp_mma = beam[b].lp_mma + logp.at(b, v);
        c.lp_lm = beam[b].lp_lm + lm_logp[v];
        c.tokens = beam[b].tokens;
        c.tokens.push_back(v);
        c.score = c.lp_mma + cfg.alpha_lm * c.lp_lm + cfg.beta_len * (beam[b].emitted + 1);
        candidates.push_back(std::move(c));
      }
    }

    std::vector<Candidate> next_beam;
    const size_t finished_before = finished.size();
    prune(candidates, next_beam, finished, cfg.B);

    for (size_t fi = finished_before; fi < finished.size(); ++fi) {
      FinishedHyp fh;
      fh.cand = finished[fi];
      fh.blog = beam[finished[fi].parent].blog;
      fh.forced_count = beam[finished[fi].parent].forced_count;
      finished_full.push_back(std::move(fh));
    }
    // finished may have been truncated; keep finished_full consistent
    if (finished_full.size() > static_cast<size_t>(cfg.B)) {
      std::sort(finished_full.begin(), finished_full.end(),
                [](const FinishedHyp& a, const FinishedHyp& b) {
                  return candidate_better(a.cand, b.cand);
                });
      finished_full.resize(cfg.B);
    }

    std::vector<Hyp> new_beam;
    new_beam.reserve(next_beam.size());
    for (const auto& c : next_beam) {
      Hyp hyp = beam[c.parent];
      hyp.tokens.push_back(c.token);
      hyp.lp_mma = c.lp_mma;
      hyp.lp_lm = c.lp_lm;
      hyp.emitted += 1;
      new_beam.push_back(std::move(hyp));
    }
    beam = std::move(new_beam);

    if (static_cast<int>(finished.size()) >= cfg.B) break;
  }

  // pick the winner; fall back to the best unfinished hypothesis if nothing
  // reached eos by L_max
  std::vector<int> best_tokens;
  if (!finished_full.empty()) {
    std::sort(finished_full.begin(), finished_full.end(),
              [](const FinishedHyp& a, const FinishedHyp& b) {
                return candidate_better(a.cand, b.cand);
              });
    const FinishedHyp& best = finished_full.front();
    best_tokens = best.cand.tokens;
    rec.score = best.cand.score;
    rec.log_p_mma = best.cand.lp_mma;
    rec.log_p_lm = best.cand.lp_lm;
    rec.boundary_log = best.blog;
    rec.forced_count = best.forced_count;
    rec.completed = true;
  } else {
    if (beam.empty()) throw std::runtime_error("decode: no hypotheses survive");
    int best_i = 0;
    for (int i = 1; i < static_cast<int>(beam.size()); ++i)
      if (beam[i].score(cfg) > beam[best_i].score(cfg)) best_i = i;
    const Hyp& best = beam[best_i];
    best_tokens = best.tokens;
    rec.score = best.score(cfg);
    rec.log_p_mma = best.lp_mma;
    rec.log_p_lm = best.lp_lm;
    rec.boundary_log = best.blog;
    rec.forced_count = best.forced_count;
    rec.completed = false;
    std::fprintf(stderr, "[decode] warning: %s did not finish within L_max=%d\n", id.c_str(),
                 cfg.L_max);
  }

  for (int tok : best_tokens) {
    if (tok == kSosId || tok == kEosId || tok == kPadId) continue;
    rec.task_tokens.push_back(tok - kTokenOffset);
  }

  // streamable iff every candidate at every step up to the best hypothesis's
  // final step activated all heads
  rec.streamable = true;
  const size_t best_steps = rec.boundary_log.size();
  for (size_t s = 0; s < best_steps && s < rec.beam_log.size(); ++s) {
    for (const auto& cand : rec.beam_log[s].candidates) {
      for (const auto& ev : cand.events) {
        if (!ev.activated) rec.streamable = false;
      }
    }
  }
  if (cfg.head_sync) assert_latency_bound(rec, cfg.eps_wait);
  return rec;
}

void assert_latency_bound(const DecodedUtterance& d, int eps_wait) {
  auto check_step = [&](const StepLog& s) {
    std::map<int, std::pair<int, int>> span;  // layer -> (min, max) activated frame
    for (const auto& ev : s.events) {
      if (!ev.activated) continue;
      auto it = span.find(ev.layer);
      if (it == span.end()) {
        span[ev.layer] = {ev.frame, ev.frame};
      } else {
        it->second.first = std::min(it->second.first, ev.frame);
        it->second.second = std::max(it->second.second, ev.frame);
      }
    }
    for (const auto& [layer, mm] : span) {
      if (mm.second - mm.first >= eps_wait)
        throw std::runtime_error("latency bound violated in utterance " + d.id + " layer " +
                                 std::to_string(layer) + ": spread " +
                                 std::to_string(mm.second - mm.first) + " >= eps_wait " +
                                 std::to_string(eps_wait));
    }
  };
  for (const auto& s : d.boundary_log) check_step(s);
  for (const auto& bs : d.beam_log)
    for (const auto& c : bs.candidates) check_step(c);
}

namespace {

nlohmann::json steplog_to_json(const StepLog& s) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : s.events)
    events.push_back({e.layer, e.head, e.frame, e.forced ? 1 : 0, e.activated ? 1 : 0});
  return events;
}

StepLog steplog_from_json(const nlohmann::json& j) {
  StepLog s;
  for (const auto& e : j) {
    BoundaryEvent ev;
    ev.layer = e.at(0).get<int>();
    ev.head = e.at(1).get<int>();
    ev.frame = e.at(2).get<int>();
    ev.forced = e.at(3).get<int>() != 0;
    ev.activated = e.at(4).get<int>() != 0;
    s.events.push_back(ev);
  }
  return s;
}

}  // namespace

nlohmann::json decode_to_json(const DecodedUtterance& d) {
  nlohmann::json blog = nlohmann::json::array();
  for (const auto& s : d.boundary_log) blog.push_back(steplog_to_json(s));
  nlohmann::json beam = nlohmann::json::array();
  for (const auto& bs : d.beam_log) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : bs.candidates) cands.push_back(steplog_to_json(c));
    beam.push_back({{"hwm", bs.hwm}, {"cands", std::move(cands)}});
  }
  return {{"id", d.id},
          {"tokens", d.task_tokens},
          {"score", d.score},
          {"log_p_mma", d.log_p_mma},
          {"log_p_lm", d.log_p_lm},
          {"boundary_log", std::move(blog)},
          {"beam_log", std::move(beam)},
          {"forced_count", d.forced_count},
          {"streamable", d.streamable},
          {"completed", d.completed},
          {"frames", d.frames}};
}

DecodedUtterance decode_from_json(const nlohmann::json& j) {
  DecodedUtterance d;
  d.id = j.at("id").get<std::string>();
  d.task_tokens = j.at("tokens").get<std::vector<int>>();
  d.score = j.at("score").get<double>();
  d.log_p_mma = j.value("log_p_mma", 0.0);
  d.log_p_lm = j.value("log_p_lm", 0.0);
  for (const auto& s : j.at("boundary_log")) d.boundary_log.push_back(steplog_from_json(s));
  for (const auto& bs : j.at("beam_log")) {
    BeamStepLog b;
    b.hwm = bs.at("hwm").get<int>();
    for (const auto& c : bs.at("cands")) b.candidates.push_back(steplog_from_json(c));
    d.beam_log.push_back(std::move(b));
  }
  d.forced_count = j.at("forced_count").get<int>();
  d.streamable = j.at("streamable").get<bool>();
  d.completed = j.value("completed", true);
  d.frames = j.at("frames").get<int>();
  return d;
}

void write_decodes_jsonl(const std::vector<DecodedUtterance>& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& d : ds) f << decode_to_json(d).dump() << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<DecodedUtterance> read_decodes_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open decodes: " + path);
  std::vector<DecodedUtterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(decode_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": malformed line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return out;
}

}  // namespace mma
