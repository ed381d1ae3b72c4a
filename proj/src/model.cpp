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

#include "mma/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mma {

void ModelConfig::validate() const {
  if (d_model <= 0 || d_ff <= 0 || E <= 0 || D <= 0) throw std::invalid_argument("bad model sizes");
  if (H <= 0 || d_model % H != 0) throw std::invalid_argument("d_model must be divisible by H");
  if (H_ma <= 0 || H_ca <= 0 || d_model % (H_ma * H_ca) != 0)
    throw std::invalid_argument("d_model must be divisible by H_ma * H_ca");
  if (d_model % H_ma != 0) throw std::invalid_argument("d_model must be divisible by H_ma");
  if (D_lm < 0 || D_lm > D - 1)
    throw std::invalid_argument("D_lm must satisfy 0 <= D_lm <= D-1");
  if (w < 1) throw std::invalid_argument("w must be >= 1");
  if (p_hd < 0.0f || p_hd >= 1.0f) throw std::invalid_argument("p_hd must be in [0, 1)");
  if (frame_stack_factor < 1) throw std::invalid_argument("frame_stack_factor must be >= 1");
  if (vocab_size < kTokenOffset + 1) throw std::invalid_argument("vocab too small");
  if (label_smoothing < 0.0f || label_smoothing >= 1.0f)
    throw std::invalid_argument("label_smoothing must be in [0, 1)");
  if (dropout < 0.0f || dropout >= 1.0f) throw std::invalid_argument("dropout must be in [0, 1)");
  if (noise_std < 0.0f) throw std::invalid_argument("noise_std must be >= 0");
  if (d_in < 1) throw std::invalid_argument("d_in must be >= 1");
  if (chunk_mask) {
    if (chunk_mask->current < 1 || chunk_mask->left < 0 || chunk_mask->right < 0)
      throw std::invalid_argument("bad chunk_mask sizes");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = {{"d_model", cfg.d_model},
       {"d_ff", cfg.d_ff},
       {"H", cfg.H},
       {"H_ma", cfg.H_ma},
       {"H_ca", cfg.H_ca},
       {"w", cfg.w},
       {"E", cfg.E},
       {"D", cfg.D},
       {"D_lm", cfg.D_lm},
       {"p_hd", cfg.p_hd},
       {"frame_stack_factor", cfg.frame_stack_factor},
       {"vocab_size", cfg.vocab_size},
       {"label_smoothing", cfg.label_smoothing},
       {"dropout", cfg.dropout},
       {"noise_std", cfg.noise_std},
       {"d_in", cfg.d_in},
       {"max_positions", cfg.max_positions}};
  if (cfg.chunk_mask) {
    j["chunk_mask"] = {{"left", cfg.chunk_mask->left},
                       {"current", cfg.chunk_mask->current},
                       {"right", cfg.chunk_mask->right}};
  } else {
    j["chunk_mask"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  j.at("d_model").get_to(cfg.d_model);
  j.at("d_ff").get_to(cfg.d_ff);
  j.at("H").get_to(cfg.H);
  j.at("H_ma").get_to(cfg.H_ma);
  j.at("H_ca").get_to(cfg.H_ca);
  j.at("w").get_to(cfg.w);
  j.at("E").get_to(cfg.E);
  j.at("D").get_to(cfg.D);
  j.at("D_lm").get_to(cfg.D_lm);
  j.at("p_hd").get_to(cfg.p_hd);
  j.at("frame_stack_factor").get_to(cfg.frame_stack_factor);
  j.at("vocab_size").get_to(cfg.vocab_size);
  j.at("label_smoothing").get_to(cfg.label_smoothing);
  if (j.contains("dropout")) j.at("dropout").get_to(cfg.dropout);
  if (j.contains("noise_std")) j.at("noise_std").get_to(cfg.noise_std);
  j.at("d_in").get_to(cfg.d_in);
  if (j.contains("max_positions")) j.at("max_positions").get_to(cfg.max_positions);
  cfg.chunk_mask.reset();
  if (j.contains("chunk_mask") && !j.at("chunk_mask").is_null()) {
    ChunkMaskConfig cm;
    j.at("chunk_mask").at("left").get_to(cm.left);
    j.at("chunk_mask").at("current").get_to(cm.current);
    j.at("chunk_mask").at("right").get_to(cm.right);
    cfg.chunk_mask = cm;
  }
}

namespace {

Tensor sinusoidal_positions(int max_len, int d_model) {
  Tensor pe = Tensor::zeros({max_len, d_model});
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe.vec()[static_cast<size_t>(pos) * d_model + i] = static_cast<float>(std::sin(angle));
      if (i + 1 < d_model)
        pe.vec()[static_cast<size_t>(pos) * d_model + i + 1] =
            static_cast<float>(std::cos(angle));
    }
  }
  return pe;
}

LinearParams make_linear(int in, int out, RngStream& rng) {
  LinearParams p;
  p.w = Tensor::xavier_uniform(in, out, rng);
  p.b = Tensor::zeros({out}, true);
  return p;
}

LayerNormParams make_layer_norm(int n) {
  LayerNormParams p;
  p.gain = Tensor::full({n}, 1.0f, true);
  p.bias = Tensor::zeros({n}, true);
  return p;
}

MhaParams make_mha(int d_model, int heads, RngStream& rng) {
  MhaParams p;
  const int d_k = d_model / heads;
  for (int h = 0; h < heads; ++h) {
    p.w_q.push_back(Tensor::xavier_uniform(d_model, d_k, rng));
    p.w_k.push_back(Tensor::xavier_uniform(d_model, d_k, rng));
    p.w_v.push_back(Tensor::xavier_uniform(d_model, d_k, rng));
  }
  p.w_o = Tensor::xavier_uniform(d_model, d_model, rng);
  p.b_o = Tensor::zeros({d_model}, true);
  return p;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  return add_rowvec(matmul(x, p.w), p.b);
}

// Multihead scaled-dot attention; attention probabilities get dropout in
// training mode, per-head contexts are concatenated and output-projected.
Tensor mha(const Tensor& q_in, const Tensor& kv_in, const MhaParams& p, const Tensor* allow,
           float drop_p, const ForwardCtx& ctx) {
  const int heads = static_cast<int>(p.w_q.size());
  const int d_k = p.w_q[0].cols();
  const float inv_sqrt = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d_k)));
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor q = matmul(q_in, p.w_q[h]);
    Tensor k = matmul(kv_in, p.w_k[h]);
    Tensor v = matmul(kv_in, p.w_v[h]);
    Tensor att = masked_softmax(scale(matmul_nt(q, k), inv_sqrt), allow);
    if (ctx.training && ctx.dropout != nullptr)
      att = dropout(att, drop_p, *ctx.dropout, true);
    parts.push_back(matmul(att, v));
  }
  return add_rowvec(matmul(concat_cols(parts), p.w_o), p.b_o);
}

}  // namespace

Tensor stack_frames(const Tensor& frames, int factor) {
  if (frames.ndim() != 2 || frames.rows() == 0)
    throw std::invalid_argument("stack_frames: input must be non-empty [T_raw, d_in]");
  const int t_raw = frames.rows(), d_in = frames.cols();
  if (t_raw < factor) throw std::invalid_argument("stack_frames: T_raw < frame_stack_factor");
  const int t = (t_raw + factor - 1) / factor;
  Tensor out = Tensor::zeros({t, factor * d_in});
  for (int i = 0; i < t; ++i) {
    for (int f = 0; f < factor; ++f) {
      const int src = i * factor + f;
      if (src >= t_raw) break;
      const float* row = frames.data() + static_cast<size_t>(src) * d_in;
      std::copy(row, row + d_in,
                out.data() + static_cast<size_t>(i) * factor * d_in + static_cast<size_t>(f) * d_in);
    }
  }
  return out;
}

Tensor causal_mask(int n) {
  Tensor m = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) m.vec()[static_cast<size_t>(i) * n + j] = 1.0f;
  return m;
}

Tensor chunk_attention_mask(int t, const ChunkMaskConfig& cm) {
  Tensor m = Tensor::zeros({t, t});
  for (int i = 0; i < t; ++i) {
    const int chunk = i / cm.current;
    const int start = chunk * cm.current;
    const int end = std::min(t - 1, start + cm.current - 1);
    const int lo = std::max(0, start - cm.left);
    const int hi = std::min(t - 1, end + cm.right);
    for (int j = lo; j <= hi; ++j) m.vec()[static_cast<size_t>(i) * t + j] = 1.0f;
  }
  return m;
}

std::vector<int> shift_to_model_vocab(const std::vector<int>& task_tokens) {
  std::vector<int> out;
  out.reserve(task_tokens.size());
  for (int t : task_tokens) out.push_back(t + kTokenOffset);
  return out;
}

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m(cfg);
  m.build(RngStream(seed, "init"));
  return m;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig cfg = ckpt.config.get<ModelConfig>();
  Model m = Model::init(cfg, 0);
  auto params = m.named_params();
  load_into(ckpt, params);
  return m;
}

void Model::build(RngStream init) {
  embed = Tensor::xavier_uniform(cfg_.vocab_size, cfg_.d_model, init);
  in_proj = make_linear(cfg_.frame_stack_factor * cfg_.d_in, cfg_.d_model, init);
  for (int l = 0; l < cfg_.E; ++l) {
    EncLayerParams lay;
    lay.ln1 = make_layer_norm(cfg_.d_model);
    lay.san = make_mha(cfg_.d_model, cfg_.H, init);
    lay.ln2 = make_layer_norm(cfg_.d_model);
    lay.ff1 = make_linear(cfg_.d_model, cfg_.d_ff, init);
    lay.ff2 = make_linear(cfg_.d_ff, cfg_.d_model, init);
    enc.push_back(std::move(lay));
  }
  enc_ln = make_layer_norm(cfg_.d_model);
  for (int l = 0; l < cfg_.D; ++l) {
    DecLayerParams lay;
    lay.ln1 = make_layer_norm(cfg_.d_model);
    lay.san = make_mha(cfg_.d_model, cfg_.H, init);
    lay.has_mma = l >= cfg_.D_lm;
    if (lay.has_mma) {
      lay.ln2 = make_layer_norm(cfg_.d_model);
      for (int h = 0; h < cfg_.H_ma; ++h)
        lay.mma.ma.push_back(make_monotonic_head(cfg_.d_model, cfg_.d_k_ma(), init));
      for (int c = 0; c < cfg_.H_ca; ++c)
        lay.mma.ca.push_back(make_chunk_head(cfg_.d_model, cfg_.d_c(), init));
      lay.mma.w_o = Tensor::xavier_uniform(cfg_.d_model, cfg_.d_model, init);
      lay.mma.b_o = Tensor::zeros({cfg_.d_model}, true);
    }
    lay.ln3 = make_layer_norm(cfg_.d_model);
    lay.ff1 = make_linear(cfg_.d_model, cfg_.d_ff, init);
    lay.ff2 = make_linear(cfg_.d_ff, cfg_.d_model, init);
    dec.push_back(std::move(lay));
  }
  dec_ln = make_layer_norm(cfg_.d_model);
  out_proj = make_linear(cfg_.d_model, cfg_.vocab_size, init);
  pe_ = sinusoidal_positions(cfg_.max_positions, cfg_.d_model);
}

Tensor Model::encode(const Tensor& frames, const ForwardCtx& ctx) const {
  Tensor x = linear(stack_frames(frames, cfg_.frame_stack_factor), in_proj);
  const int t = x.rows();
  if (t > cfg_.max_positions) throw std::invalid_argument("input longer than max_positions");
  std::vector<int> pos(t);
  for (int i = 0; i < t; ++i) pos[i] = i;
  x = add(x, gather_rows(pe_, pos));

  Tensor allow;
  const Tensor* allow_ptr = nullptr;
  if (cfg_.chunk_mask) {
    allow = chunk_attention_mask(t, *cfg_.chunk_mask);
    allow_ptr = &allow;
  }
  for (const auto& lay : enc) {
    Tensor a = layer_norm(x, lay.ln1.gain, lay.ln1.bias);
    Tensor sa = mha(a, a, lay.san, allow_ptr, cfg_.dropout, ctx);
    if (ctx.training && ctx.dropout) sa = dropout(sa, cfg_.dropout, *ctx.dropout, true);
    x = add(x, sa);
    Tensor f = layer_norm(x, lay.ln2.gain, lay.ln2.bias);
    Tensor ff = linear(relu(linear(f, lay.ff1)), lay.ff2);
    if (ctx.training && ctx.dropout) ff = dropout(ff, cfg_.dropout, *ctx.dropout, true);
    x = add(x, ff);
  }
  return layer_norm(x, enc_ln.gain, enc_ln.bias);
}

TrainForward Model::decode_train(const Tensor& h, const std::vector<int>& task_tokens,
                                 const ForwardCtx& ctx) const {
  if (task_tokens.empty()) throw std::invalid_argument("decode_train: empty target sequence");
  std::vector<int> input_ids = {kSosId};
  for (int t : shift_to_model_vocab(task_tokens)) input_ids.push_back(t);
  const int u = static_cast<int>(input_ids.size());
  if (u > cfg_.max_positions) throw std::invalid_argument("target longer than max_positions");

  Tensor x = scale(gather_rows(embed, input_ids),
                   static_cast<float>(std::sqrt(static_cast<double>(cfg_.d_model))));
  std::vector<int> pos(u);
  for (int i = 0; i < u; ++i) pos[i] = i;
  x = add(x, gather_rows(pe_, pos));

  Tensor causal = causal_mask(u);
  TrainForward out;
  for (int l = 0; l < cfg_.D; ++l) {
    const auto& lay = dec[l];
    Tensor a = layer_norm(x, lay.ln1.gain, lay.ln1.bias);
    Tensor sa = mha(a, a, lay.san, &causal, cfg_.dropout, ctx);
    if (ctx.training && ctx.dropout) sa = dropout(sa, cfg_.dropout, *ctx.dropout, true);
    x = add(x, sa);

    if (lay.has_mma) {
      Tensor s = layer_norm(x, lay.ln2.gain, lay.ln2.bias);
      AlignmentRecord rec;
      rec.layer = l;

      HeadDropDraw hd;
      hd.keep.assign(cfg_.H_ma, 1);
      hd.n_kept = cfg_.H_ma;
      hd.scale = 1.0f;
      if (ctx.training && ctx.headdrop != nullptr && cfg_.p_hd > 0.0f)
        hd = draw_headdrop(cfg_.H_ma, HeadDropConfig{cfg_.p_hd}, *ctx.headdrop);

      std::vector<Tensor> alphas;
      const Mode pmode = (ctx.training && ctx.noise != nullptr) ? Mode::kTrain : Mode::kTest;
      RngStream dummy;
      for (int m = 0; m < cfg_.H_ma; ++m) {
        Tensor e = monotonic_energy(h, s, lay.mma.ma[m]);
        Tensor p = selection_probs(e, pmode, cfg_.noise_std,
                                   ctx.noise != nullptr ? *ctx.noise : dummy);
        Tensor alpha = expected_alignment(p);
        if (!hd.keep[m]) alpha = scale(alpha, 0.0f);
        alphas.push_back(alpha);
        rec.p.push_back(p);
        rec.alpha.push_back(alpha);
      }
      std::vector<Tensor> u_c, v_c;
      for (int c = 0; c < cfg_.H_ca; ++c) {
        u_c.push_back(attention_energy(h, s, lay.mma.ca[c].w_q, lay.mma.ca[c].w_k, nullptr));
        v_c.push_back(matmul(h, lay.mma.ca[c].w_v));
      }
      std::vector<Tensor> parts;
      parts.reserve(static_cast<size_t>(cfg_.H_ma) * cfg_.H_ca);
      for (int m = 0; m < cfg_.H_ma; ++m)
        for (int c = 0; c < cfg_.H_ca; ++c)
          parts.push_back(matmul(chunk_beta(alphas[m], u_c[c], cfg_.w), v_c[c]));
      Tensor cat = concat_cols(parts);
      if (hd.scale != 1.0f) cat = scale(cat, hd.scale);
      Tensor ctx_out = add_rowvec(matmul(cat, lay.mma.w_o), lay.mma.b_o);
      if (ctx.training && ctx.dropout) ctx_out = dropout(ctx_out, cfg_.dropout, *ctx.dropout, true);
      x = add(x, ctx_out);

      rec.kept = hd.keep;
      rec.headdrop_scale = hd.scale;
      out.aligns.push_back(std::move(rec));
    }

    Tensor f = layer_norm(x, lay.ln3.gain, lay.ln3.bias);
    Tensor ff = linear(relu(linear(f, lay.ff1)), lay.ff2);
    if (ctx.training && ctx.dropout) ff = dropout(ff, cfg_.dropout, *ctx.dropout, true);
    x = add(x, ff);
  }
  out.logits = linear(layer_norm(x, dec_ln.gain, dec_ln.bias), out_proj);
  return out;
}

Tensor Model::loss(const Tensor& logits, const std::vector<int>& task_tokens) const {
  std::vector<int> targets = shift_to_model_vocab(task_tokens);
  targets.push_back(kEosId);
  return softmax_xent_smoothed(logits, targets, cfg_.label_smoothing);
}

std::vector<NamedParam> Model::named_params() const {
  std::vector<NamedParam> out;
  auto push = [&out](const std::string& name, const Tensor& t) { out.push_back({name, t}); };
  auto push_ln = [&](const std::string& prefix, const LayerNormParams& p) {
    push(prefix + ".gain", p.gain);
    push(prefix + ".bias", p.bias);
  };
  auto push_lin = [&](const std::string& prefix, const LinearParams& p) {
    push(prefix + ".w", p.w);
    push(prefix + ".b", p.b);
  };
  auto push_mha = [&](const std::string& prefix, const MhaParams& p) {
    for (size_t h = 0; h < p.w_q.size(); ++h) {
      const std::string hp = prefix + "." + std::to_string(h);
      push(hp + ".wq", p.w_q[h]);
      push(hp + ".wk", p.w_k[h]);
      push(hp + ".wv", p.w_v[h]);
    }
    push(prefix + ".wo", p.w_o);
    push(prefix + ".bo", p.b_o);
  };

  push("embed", embed);
  push_lin("in_proj", in_proj);
  for (size_t l = 0; l < enc.size(); ++l) {
    const std::string lp = "enc." + std::to_string(l);
    push_ln(lp + ".ln1", enc[l].ln1);
    push_mha(lp + ".san", enc[l].san);
    push_ln(lp + ".ln2", enc[l].ln2);
    push_lin(lp + ".ff1", enc[l].ff1);
    push_lin(lp + ".ff2", enc[l].ff2);
  }
  push_ln("enc_ln", enc_ln);
  for (size_t l = 0; l < dec.size(); ++l) {
    const std::string lp = "dec." + std::to_string(l);
    push_ln(lp + ".ln1", dec[l].ln1);
    push_mha(lp + ".san", dec[l].san);
    if (dec[l].has_mma) {
      push_ln(lp + ".ln2", dec[l].ln2);
      for (size_t m = 0; m < dec[l].mma.ma.size(); ++m) {
        const std::string mp = lp + ".mma.ma." + std::to_string(m);
        push(mp + ".ws", dec[l].mma.ma[m].w_s);
        push(mp + ".wh", dec[l].mma.ma[m].w_h);
        push(mp + ".r", dec[l].mma.ma[m].r);
      }
      for (size_t c = 0; c < dec[l].mma.ca.size(); ++c) {
        const std::string cp = lp + ".mma.ca." + std::to_string(c);
        push(cp + ".wq", dec[l].mma.ca[c].w_q);
        push(cp + ".wk", dec[l].mma.ca[c].w_k);
        push(cp + ".wv", dec[l].mma.ca[c].w_v);
      }
      push(lp + ".mma.wo", dec[l].mma.w_o);
      push(lp + ".mma.bo", dec[l].mma.b_o);
    }
    push_ln(lp + ".ln3", dec[l].ln3);
    push_lin(lp + ".ff1", dec[l].ff1);
    push_lin(lp + ".ff2", dec[l].ff2);
  }
  push_ln("dec_ln", dec_ln);
  push_lin("out_proj", out_proj);
  return out;
}

std::vector<Tensor> Model::param_tensors() const {
  std::vector<Tensor> out;
  for (auto& np : named_params()) out.push_back(np.tensor);
  return out;
}

void Model::save(const std::string& path) const {
  nlohmann::json cfg_json = cfg_;
  write_checkpoint(path, cfg_json, named_params());
}

TrainStepResult train_step(Model& model, AdamNoam& opt, const std::vector<TrainItem>& batch,
                           int step, TrainRngs& rngs) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  ForwardCtx ctx;
  ctx.training = true;
  ctx.dropout = &rngs.dropout;
  ctx.noise = &rngs.noise;
  ctx.headdrop = &rngs.headdrop;

  int total_targets = 0;
  for (const auto& item : batch) total_targets += static_cast<int>(item.task_tokens.size()) + 1;

  opt.zero_grads();
  Tensor total;
  for (const auto& item : batch) {
    Tensor h = model.encode(item.frames, ctx);
    TrainForward fwd = model.decode_train(h, item.task_tokens, ctx);
    Tensor sample_loss = model.loss(fwd.logits, item.task_tokens);
    const float weight =
        static_cast<float>(item.task_tokens.size() + 1) / static_cast<float>(total_targets);
    Tensor weighted = scale(sample_loss, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  }

  TrainStepResult res;
  res.loss = total.item();
  res.lr = noam_lr(opt.config(), step);
  backward(total);
  res.applied = opt.step(step);
  return res;
}

}  // namespace mma
