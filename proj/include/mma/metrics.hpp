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

#ifndef MMA_METRICS_HPP
#define MMA_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "mma/decoding.hpp"
#include "mma/synthdata.hpp"

// Post-processing over decode logs: WER, boundary coverage, streamability,
// and boundary latency versus the synthetic ground truth. Everything here
// consumes decode records, never live model state.

namespace mma {

struct WerResult {
  int distance = 0;  // S + D + I
  int ref_len = 0;
  double percent = 0.0;
};

// Levenshtein with unit costs. Throws on an empty reference.
WerResult word_error_rate(const std::vector<int>& hyp, const std::vector<int>& ref);

// (hyp_index, ref_index) pairs that align as equal tokens under a
// minimal-cost alignment (diagonal-preferring backtrace).
std::vector<std::pair<int, int>> levenshtein_matches(const std::vector<int>& hyp,
                                                     const std::vector<int>& ref);

struct UtteranceEval {
  std::string id;
  int ref_len = 0;
  int hyp_len = 0;
  double wer = 0.0;
  double coverage = 0.0;  // 100 * Q / steps for the best hypothesis
  bool streamable = false;
  double frames_streamed_fraction = 1.0;
  int forced_count = 0;
  std::optional<double> mean_delay;  // frames, matched tokens only
  std::optional<double> max_delay;
};

struct EvalReport {
  double wer_percent = 0.0;    // corpus-level: total edits / total ref tokens
  double r_cov_percent = 0.0;  // mean per-utterance coverage
  double r_str_percent = 0.0;
  double mean_frames_streamed = 0.0;
  std::optional<double> mean_delay;
  std::optional<double> max_delay;
  int n_utterances = 0;
  int n_skipped = 0;
  std::vector<UtteranceEval> utterances;
};

// Boundary coverage of one decode record: average activated boundaries per
// head over the best hypothesis's steps, as a percentage of those steps.
double boundary_coverage(const DecodedUtterance& d);

// 1 iff every candidate at every step up to the best hypothesis's final step
// activated every head.
bool utterance_streamable(const DecodedUtterance& d);

// Fraction of encoder frames consumed before the first streaming failure
// (1.0 when streamable).
double frames_streamed_fraction(const DecodedUtterance& d);

EvalReport evaluate(const std::vector<DecodedUtterance>& decodes, const Dataset& refs);

void write_report_csv(const EvalReport& r, const std::string& path);
void write_per_utterance_csv(const EvalReport& r, const std::string& path);

}  // namespace mma

#endif  // MMA_METRICS_HPP
