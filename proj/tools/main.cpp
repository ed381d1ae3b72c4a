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

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "mma/config.hpp"
#include "mma/metrics.hpp"

namespace fs = std::filesystem;
using namespace mma;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir,
                           const std::string& command, OutputGuard& guard) {
  fs::create_directories(dir);
  const std::string path = dir + "/resolved_config." + command + ".json";
  guard.track(path);
  write_text_file(path, cfg.to_json().dump(2) + "\n");
}

Dataset load_split(const RunConfig& cfg, const std::string& split) {
  const std::string path = cfg.data_dir + "/" + split + ".jsonl";
  if (!fs::exists(path))
    throw std::runtime_error("dataset split not found: " + path + " (run gen-data first)");
  return load_jsonl(path);
}

int cmd_gen_data(const RunConfig& cfg) {
  OutputGuard guard;
  fs::create_directories(cfg.data_dir);
  DatasetSplits splits = generate(cfg.task, cfg.model.frame_stack_factor);
  const std::string train_p = guard.track(cfg.data_dir + "/train.jsonl");
  const std::string dev_p = guard.track(cfg.data_dir + "/dev.jsonl");
  const std::string test_p = guard.track(cfg.data_dir + "/test.jsonl");
  save_jsonl(splits.train, train_p);
  save_jsonl(splits.dev, dev_p);
  save_jsonl(splits.test, test_p);

  nlohmann::json manifest = {
      {"task", cfg.task},
      {"frame_stack_factor", cfg.model.frame_stack_factor},
      {"splits",
       {{"train", "train.jsonl"}, {"dev", "dev.jsonl"}, {"test", "test.jsonl"}}},
      {"hash",
       {{"train", file_content_hash(train_p)},
        {"dev", file_content_hash(dev_p)},
        {"test", file_content_hash(test_p)}}}};
  guard.track(cfg.data_dir + "/manifest.json");
  write_text_file(cfg.data_dir + "/manifest.json", manifest.dump(2) + "\n");
  write_resolved_config(cfg, cfg.data_dir, "gen-data", guard);
  guard.commit();
  std::printf("wrote %zu/%zu/%zu samples to %s\n", splits.train.size(), splits.dev.size(),
              splits.test.size(), cfg.data_dir.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  OutputGuard guard;
  fs::create_directories(cfg.out_dir);
  Dataset train_set = load_split(cfg, "train");
  if (train_set.empty()) throw std::runtime_error("training split is empty");

  Model model = Model::init(cfg.model, cfg.seed);
  OptimConfig oc;
  oc.d_model = cfg.model.d_model;
  oc.warmup_steps = cfg.train.warmup;
  oc.lr_constant = cfg.train.lr_constant;
  oc.beta1 = cfg.train.beta1;
  oc.beta2 = cfg.train.beta2;
  oc.eps = cfg.train.adam_eps;
  AdamNoam opt(model.param_tensors(), oc);
  TrainRngs rngs(cfg.seed);
  RngStream batcher(cfg.seed, "batch");

  const std::string loss_path = guard.track(cfg.out_dir + "/loss.csv");
  std::ofstream loss_csv(loss_path);
  loss_csv << "step,loss,lr\n";

  for (int step = 1; step <= cfg.train.steps; ++step) {
    std::vector<TrainItem> batch;
    batch.reserve(cfg.train.batch_size);
    for (int b = 0; b < cfg.train.batch_size; ++b) {
      const auto& s = train_set[batcher.below(train_set.size())];
      batch.push_back({s.frames, s.tokens});
    }
    TrainStepResult res = train_step(model, opt, batch, step, rngs);
    loss_csv << step << "," << res.loss << "," << res.lr << "\n";
    if (!res.applied)
      std::fprintf(stderr, "[train] step %d skipped: non-finite gradients\n", step);
    if (cfg.train.log_every > 0 && step % cfg.train.log_every == 0)
      std::printf("step %6d  loss %.4f  lr %.5f  (%.1fs)\n", step, res.loss, res.lr,
                  seconds_since(t0));
  }
  loss_csv.close();

  const std::string ckpt_path = guard.track(cfg.out_dir + "/checkpoint.mma");
  model.save(ckpt_path);
  write_resolved_config(cfg, cfg.out_dir, "train", guard);
  guard.commit();
  std::printf("trained %d steps in %.1fs; checkpoint at %s\n", cfg.train.steps,
              seconds_since(t0), ckpt_path.c_str());
  return 0;
}

std::vector<DecodedUtterance> decode_dataset(const Model& model, const Dataset& ds,
                                             const BeamConfig& bc, int threads) {
  std::vector<DecodedUtterance> out(ds.size());
  if (threads <= 1) {
    NullLM lm(model.config().vocab_size);
    for (size_t i = 0; i < ds.size(); ++i)
      out[i] = decode_utterance(model, ds[i].frames, bc, lm, ds[i].id);
    return out;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string error_msg;
  std::mutex error_mu;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      NullLM lm(model.config().vocab_size);
      size_t i;
      while ((i = next.fetch_add(1)) < ds.size() && !failed.load()) {
        try {
          out[i] = decode_utterance(model, ds[i].frames, bc, lm, ds[i].id);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mu);
          failed.store(true);
          error_msg = e.what();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load()) throw std::runtime_error("decode worker failed: " + error_msg);
  return out;
}

int cmd_decode(const RunConfig& cfg, const std::string& split, std::string checkpoint,
               std::string output) {
  const auto t0 = std::chrono::steady_clock::now();
  OutputGuard guard;
  fs::create_directories(cfg.out_dir);
  if (checkpoint.empty()) checkpoint = cfg.out_dir + "/checkpoint.mma";
  if (output.empty()) output = cfg.out_dir + "/decode_" + split + ".jsonl";
  Model model = Model::from_checkpoint(read_checkpoint(checkpoint));
  Dataset ds = load_split(cfg, split);

  std::vector<DecodedUtterance> decs = decode_dataset(model, ds, cfg.beam, cfg.threads);
  guard.track(output);
  write_decodes_jsonl(decs, output);
  write_resolved_config(cfg, cfg.out_dir, "decode", guard);
  guard.commit();

  int streamable = 0, incomplete = 0;
  for (const auto& d : decs) {
    streamable += d.streamable;
    incomplete += !d.completed;
  }
  std::printf("decoded %zu utterances (%s, %s) in %.1fs; %d streamable, %d incomplete -> %s\n",
              decs.size(), split.c_str(), cfg.beam.head_sync ? "head-sync" : "standard",
              seconds_since(t0), streamable, incomplete, output.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& split, std::string decodes) {
  OutputGuard guard;
  fs::create_directories(cfg.out_dir);
  if (decodes.empty()) decodes = cfg.out_dir + "/decode_" + split + ".jsonl";
  std::vector<DecodedUtterance> decs = read_decodes_jsonl(decodes);
  Dataset refs = load_split(cfg, split);
  EvalReport rep = evaluate(decs, refs);
  guard.track(cfg.out_dir + "/report.csv");
  write_report_csv(rep, cfg.out_dir + "/report.csv");
  guard.track(cfg.out_dir + "/per_utterance.csv");
  write_per_utterance_csv(rep, cfg.out_dir + "/per_utterance.csv");
  write_resolved_config(cfg, cfg.out_dir, "eval", guard);
  guard.commit();
  std::printf("WER %.2f%%  R_cov %.2f%%  R_str %.2f%%  frames-streamed %.3f  (n=%d)\n",
              rep.wer_percent, rep.r_cov_percent, rep.r_str_percent, rep.mean_frames_streamed,
              rep.n_utterances);
  return 0;
}

int cmd_align(const RunConfig& cfg, const std::string& split, std::string checkpoint) {
  OutputGuard guard;
  const std::string align_dir = cfg.out_dir + "/align";
  fs::create_directories(align_dir);
  if (checkpoint.empty()) checkpoint = cfg.out_dir + "/checkpoint.mma";
  Model model = Model::from_checkpoint(read_checkpoint(checkpoint));
  Dataset ds = load_split(cfg, split);
  const int limit = std::min<int>(cfg.align_limit, static_cast<int>(ds.size()));

  NoGradGuard ng;
  ForwardCtx ctx;  // deterministic teacher-forced alignments
  for (int i = 0; i < limit; ++i) {
    const auto& s = ds[i];
    Tensor h = model.encode(s.frames, ctx);
    TrainForward fwd = model.decode_train(h, s.tokens, ctx);
    const std::string path = guard.track(align_dir + "/align_" + s.id + ".csv");
    std::ofstream f(path);
    f << "layer,head,output_step,frame,value\n";
    for (const auto& rec : fwd.aligns) {
      for (size_t head = 0; head < rec.alpha.size(); ++head) {
        const Tensor& alpha = rec.alpha[head];
        for (int u = 0; u < alpha.rows(); ++u)
          for (int j = 0; j < alpha.cols(); ++j)
            f << rec.layer << "," << head << "," << (u + 1) << "," << (j + 1) << ","
              << alpha.at(u, j) << "\n";
      }
    }
  }
  write_resolved_config(cfg, cfg.out_dir, "align", guard);
  guard.commit();
  std::printf("wrote %d alignment dumps to %s\n", limit, align_dir.c_str());
  return 0;
}

int cmd_ablate(const RunConfig& base) {
  OutputGuard guard;
  fs::create_directories(base.out_dir);
  const std::string table_path = guard.track(base.out_dir + "/ablate.csv");
  std::ofstream table(table_path);
  table << "d_lm,p_hd,wer,r_cov,r_str,mean_frames_streamed,forced_total\n";

  const float hd_on = base.model.p_hd > 0.0f ? base.model.p_hd : 0.5f;
  for (int d_lm = 0; d_lm <= base.model.D - 1; ++d_lm) {
    for (int hd = 0; hd <= 1; ++hd) {
      RunConfig cfg = base;
      cfg.model.D_lm = d_lm;
      cfg.model.p_hd = hd ? hd_on : 0.0f;
      char tag[64];
      std::snprintf(tag, sizeof(tag), "%s/ablate_dlm%d_hd%d", base.out_dir.c_str(), d_lm, hd);
      cfg.out_dir = tag;
      std::printf("== condition D_lm=%d p_hd=%.2f ==\n", d_lm, double(cfg.model.p_hd));
      cmd_train(cfg);
      cmd_decode(cfg, "test", "", "");
      std::vector<DecodedUtterance> decs =
          read_decodes_jsonl(cfg.out_dir + "/decode_test.jsonl");
      EvalReport rep = evaluate(decs, load_split(cfg, "test"));
      int forced_total = 0;
      for (const auto& d : decs) forced_total += d.forced_count;
      table << d_lm << "," << cfg.model.p_hd << "," << rep.wer_percent << ","
            << rep.r_cov_percent << "," << rep.r_str_percent << ","
            << rep.mean_frames_streamed << "," << forced_total << "\n";
      table.flush();
    }
  }
  write_resolved_config(base, base.out_dir, "ablate", guard);
  guard.commit();
  std::printf("ablation grid written to %s\n", table_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmastream: streaming monotonic multihead attention toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string split = "test";
  std::string checkpoint;
  std::string output;
  std::string mode;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", sets, "override config keys, e.g. --set train.steps=500")
        ->take_all();
    sub->add_option_function<std::string>(
        "--data-dir", [&](const std::string& v) { sets.push_back("data_dir=" + v); },
        "dataset directory");
    sub->add_option_function<std::string>(
        "--out-dir", [&](const std::string& v) { sets.push_back("out_dir=" + v); },
        "output directory");
    sub->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { sets.push_back("seed=" + std::to_string(v)); },
        "global seed");
    sub->add_option_function<int>(
        "--threads", [&](int v) { sets.push_back("threads=" + std::to_string(v)); },
        "worker threads for decode/eval");
    sub->add_option_function<int>(
        "--steps", [&](int v) { sets.push_back("train.steps=" + std::to_string(v)); },
        "training steps");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen);
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);
  CLI::App* decode = app.add_subcommand("decode", "beam-search decode a split");
  add_common(decode);
  decode->add_option("--split", split, "dataset split (train/dev/test)");
  decode->add_option("--checkpoint", checkpoint, "checkpoint path");
  decode->add_option("--output", output, "decode JSONL path");
  decode->add_option("--mode", mode, "head-sync or standard");
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a decode file");
  add_common(eval_cmd);
  eval_cmd->add_option("--split", split, "dataset split");
  eval_cmd->add_option("--decodes", output, "decode JSONL path");
  CLI::App* align = app.add_subcommand("align", "dump teacher-forced alignments");
  add_common(align);
  align->add_option("--split", split, "dataset split");
  align->add_option("--checkpoint", checkpoint, "checkpoint path");
  align->add_option_function<int>(
      "--limit", [&](int v) { sets.push_back("align_limit=" + std::to_string(v)); },
      "utterances to dump");
  CLI::App* ablate = app.add_subcommand("ablate", "run the D_lm x HeadDrop grid");
  add_common(ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!mode.empty()) {
      if (mode == "head-sync") sets.push_back("beam.head_sync=true");
      else if (mode == "standard") sets.push_back("beam.head_sync=false");
      else throw ConfigError("--mode must be head-sync or standard");
    }
    RunConfig cfg = RunConfig::load(config_path, sets);

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (decode->parsed()) return cmd_decode(cfg, split, checkpoint, output);
    if (eval_cmd->parsed()) return cmd_eval(cfg, split, output);
    if (align->parsed()) return cmd_align(cfg, split, checkpoint);
    if (ablate->parsed()) return cmd_ablate(cfg);
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
