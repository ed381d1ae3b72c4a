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

#include "mma/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mma {

WerResult word_error_rate(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (ref.empty()) throw std::invalid_argument("word_error_rate: empty reference");
  const int n = static_cast<int>(hyp.size()), m = static_cast<int>(ref.size());
  std::vector<int> prev(m + 1), cur(m + 1);
  for (int j = 0; j <= m; ++j) prev[j] = j;
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  WerResult r;
  r.distance = prev[m];
  r.ref_len = m;
  r.percent = 100.0 * r.distance / m;
  return r;
}

std::vector<std::pair<int, int>> levenshtein_matches(const std::vector<int>& hyp,
                                                     const std::vector<int>& ref) {
  const int n = static_cast<int>(hyp.size()), m = static_cast<int>(ref.size());
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1));
  for (int i = 0; i <= n; ++i) dp[i][0] = i;
  for (int j = 0; j <= m; ++j) dp[0][j] = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j)
      dp[i][j] = std::min({dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1),
                           dp[i - 1][j] + 1, dp[i][j - 1] + 1});
  std::vector<std::pair<int, int>> matches;
  int i = n, j = m;
  while (i > 0 && j > 0) {
    if (dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] == ref[j - 1]) matches.emplace_back(i - 1, j - 1);
      --i;
      --j;
    } else if (dp[i][j] == dp[i - 1][j] + 1) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(matches.begin(), matches.end());
  return matches;
}

double boundary_coverage(const DecodedUtterance& d) {
  const int steps = static_cast<int>(d.boundary_log.size());
  if (steps == 0) throw std::invalid_argument("boundary_coverage: empty hypothesis log");
  const int heads = static_cast<int>(d.boundary_log[0].events.size());
  if (heads == 0) throw std::invalid_argument("boundary_coverage: no head events");
  int64_t activated = 0;
  for (const auto& s : d.boundary_log)
    for (const auto& ev : s.events)
      if (ev.activated) ++activated;
  const double q = static_cast<double>(activated) / heads;
  return 100.0 * q / steps;
}

bool utterance_streamable(const DecodedUtterance& d) {
  const size_t best_steps = d.boundary_log.size();
  for (size_t s = 0; s < best_steps && s < d.beam_log.size(); ++s) {
    for (const auto& cand : d.beam_log[s].candidates)
      for (const auto& ev : cand.events)
        if (!ev.activated) return false;
  }
  return true;
}

double frames_streamed_fraction(const DecodedUtterance& d) {
  const size_t best_steps = d.boundary_log.size();
  for (size_t s = 0; s < best_steps && s < d.beam_log.size(); ++s) {
    bool failed = false;
    for (const auto& cand : d.beam_log[s].candidates)
      for (const auto& ev : cand.events)
        if (!ev.activated) failed = true;
    if (failed) {
      if (s == 0 || d.frames == 0) return 0.0;
      return static_cast<double>(d.beam_log[s - 1].hwm) / d.frames;
    }
  }
  return 1.0;
}

EvalReport evaluate(const std::vector<DecodedUtterance>& decodes, const Dataset& refs) {
  std::map<std::string, const SyntheticSample*> by_id;
  for (const auto& s : refs) by_id[s.id] = &s;

  EvalReport rep;
  int64_t total_edits = 0, total_ref = 0;
  double cov_sum = 0.0, frac_sum = 0.0;
  int streamable_count = 0;
  double delay_sum = 0.0, delay_max = 0.0;
  int64_t delay_count = 0;

  for (const auto& d : decodes) {
    auto it = by_id.find(d.id);
    if (it == by_id.end()) throw std::runtime_error("no reference for utterance " + d.id);
    const SyntheticSample& ref = *it->second;
    if (d.boundary_log.empty() || d.task_tokens.empty()) {
      std::fprintf(stderr, "[eval] warning: skipping %s (empty hypothesis)\n", d.id.c_str());
      ++rep.n_skipped;
      continue;
    }

    UtteranceEval ue;
    ue.id = d.id;
    ue.ref_len = static_cast<int>(ref.tokens.size());
    ue.hyp_len = static_cast<int>(d.task_tokens.size());
    const WerResult wer = word_error_rate(d.task_tokens, ref.tokens);
    ue.wer = wer.percent;
    total_edits += wer.distance;
    total_ref += wer.ref_len;
    ue.coverage = boundary_coverage(d);
    cov_sum += ue.coverage;
    ue.streamable = utterance_streamable(d);
    if (ue.streamable) ++streamable_count;
    ue.frames_streamed_fraction = frames_streamed_fraction(d);
    frac_sum += ue.frames_streamed_fraction;
    ue.forced_count = d.forced_count;

    // boundary delay over Levenshtein-matched tokens; hypothesis token i is
    // emitted at step i, so its events sit in boundary_log[i]
    double usum = 0.0, umax = 0.0;
    int64_t ucount = 0;
    for (const auto& [hi, ri] : levenshtein_matches(d.task_tokens, ref.tokens)) {
      if (hi >= static_cast<int>(d.boundary_log.size())) continue;
      if (ri >= static_cast<int>(ref.true_boundaries.size())) continue;
      const int truth = ref.true_boundaries[ri];
      for (const auto& ev : d.boundary_log[hi].events) {
        if (!ev.activated) continue;
        const double delay = ev.frame - truth;
        usum += delay;
        umax = std::max(umax, delay);
        ++ucount;
      }
    }
    if (ucount > 0) {
      ue.mean_delay = usum / ucount;
      ue.max_delay = umax;
      delay_sum += usum;
      delay_count += ucount;
      delay_max = std::max(delay_max, umax);
    }
    rep.utterances.push_back(std::move(ue));
  }

  rep.n_utterances = static_cast<int>(rep.utterances.size());
  if (rep.n_utterances > 0) {
    rep.wer_percent = total_ref > 0 ? 100.0 * total_edits / total_ref : 0.0;
    rep.r_cov_percent = cov_sum / rep.n_utterances;
    rep.r_str_percent = 100.0 * streamable_count / rep.n_utterances;
    rep.mean_frames_streamed = frac_sum / rep.n_utterances;
    if (delay_count > 0) {
      rep.mean_delay = delay_sum / delay_count;
      rep.max_delay = delay_max;
    }
  }
  return rep;
}

void write_report_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "metric,value\n";
  f << "wer_percent," << r.wer_percent << "\n";
  f << "r_cov_percent," << r.r_cov_percent << "\n";
  f << "r_str_percent," << r.r_str_percent << "\n";
  f << "mean_frames_streamed," << r.mean_frames_streamed << "\n";
  if (r.mean_delay) f << "mean_boundary_delay," << *r.mean_delay << "\n";
  if (r.max_delay) f << "max_boundary_delay," << *r.max_delay << "\n";
  f << "n_utterances," << r.n_utterances << "\n";
  f << "n_skipped," << r.n_skipped << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

void write_per_utterance_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "id,ref_len,hyp_len,wer,coverage,streamable,frames_streamed_fraction,forced_count,"
       "mean_delay,max_delay\n";
  for (const auto& u : r.utterances) {
    f << u.id << "," << u.ref_len << "," << u.hyp_len << "," << u.wer << "," << u.coverage << ","
      << (u.streamable ? 1 : 0) << "," << u.frames_streamed_fraction << "," << u.forced_count
      << ",";
    if (u.mean_delay) f << *u.mean_delay;
    f << ",";
    if (u.max_delay) f << *u.max_delay;
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace mma
