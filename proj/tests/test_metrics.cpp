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

#include <algorithm>
#include <map>

#include "mma/metrics.hpp"
#include "mma/rng.hpp"

using namespace mma;

namespace {

// Independent full-matrix reference with an explicit S/D/I backtrace.
struct EditBreakdown {
  int s = 0, d = 0, i = 0;
};
EditBreakdown reference_edits(const std::vector<int>& hyp, const std::vector<int>& ref) {
  const int n = static_cast<int>(hyp.size()), m = static_cast<int>(ref.size());
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1));
  for (int i = 0; i <= n; ++i) dp[i][0] = i;
  for (int j = 0; j <= m; ++j) dp[0][j] = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j)
      dp[i][j] = std::min({dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1),
                           dp[i - 1][j] + 1, dp[i][j - 1] + 1});
  EditBreakdown b;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] != ref[j - 1]) ++b.s;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++b.i;  // extra hypothesis token = insertion
      --i;
    } else {
      ++b.d;
      --j;
    }
  }
  return b;
}

// One utterance with `steps` output steps over `heads` heads; head h
// activates at step s iff pattern[h][s].
DecodedUtterance make_utt(const std::string& id, int steps, int heads,
                          const std::vector<std::vector<bool>>& pattern, int frames,
                          const std::vector<int>& tokens) {
  DecodedUtterance d;
  d.id = id;
  d.task_tokens = tokens;
  d.frames = frames;
  d.completed = true;
  for (int s = 0; s < steps; ++s) {
    StepLog sl;
    for (int h = 0; h < heads; ++h) {
      BoundaryEvent ev;
      ev.layer = 1;
      ev.head = h;
      ev.activated = pattern[h][s];
      ev.frame = ev.activated ? std::min(frames, s + 1) : frames + 1;
      sl.events.push_back(ev);
    }
    d.boundary_log.push_back(sl);
    BeamStepLog bs;
    bs.hwm = std::min(frames, s + 2);
    bs.candidates.push_back(sl);
    d.beam_log.push_back(bs);
  }
  d.streamable = utterance_streamable(d);
  return d;
}

SyntheticSample make_ref(const std::string& id, const std::vector<int>& tokens,
                         const std::vector<int>& bounds) {
  SyntheticSample s;
  s.id = id;
  s.tokens = tokens;
  s.true_boundaries = bounds;
  s.frames = Tensor::zeros({1, 1});
  return s;
}

}  // namespace

TEST_CASE("wer hand cases") {
  CHECK(word_error_rate({1, 2, 3}, {1, 2, 3}).percent == doctest::Approx(0.0));
  // one deletion out of three reference tokens
  WerResult r = word_error_rate({1, 3}, {1, 2, 3});
  CHECK(r.distance == 1);
  CHECK(r.percent == doctest::Approx(33.3333).epsilon(1e-3));
  CHECK_THROWS_AS((void)word_error_rate({1}, {}), std::invalid_argument);
}

TEST_CASE("wer equals the independent DP reference on 1000 random pairs") {
  RngStream rng(61, "wer");
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = int(rng.below(12));
    const int m = 1 + int(rng.below(12));
    std::vector<int> hyp(n), ref(m);
    for (auto& v : hyp) v = int(rng.below(5));
    for (auto& v : ref) v = int(rng.below(5));
    const auto impl = word_error_rate(hyp, ref);
    const auto oracle = reference_edits(hyp, ref);
    CHECK(impl.distance == oracle.s + oracle.d + oracle.i);
    CHECK(impl.percent == doctest::Approx(100.0 * (oracle.s + oracle.d + oracle.i) / m));
  }
}

TEST_CASE("wer is invariant under vocabulary relabeling") {
  RngStream rng(67, "perm");
  std::vector<int> perm = {4, 2, 0, 3, 1};
  for (int trial = 0; trial < 50; ++trial) {
    const int n = int(rng.below(10)), m = 1 + int(rng.below(10));
    std::vector<int> hyp(n), ref(m);
    for (auto& v : hyp) v = int(rng.below(5));
    for (auto& v : ref) v = int(rng.below(5));
    std::vector<int> hyp2 = hyp, ref2 = ref;
    for (auto& v : hyp2) v = perm[v];
    for (auto& v : ref2) v = perm[v];
    CHECK(word_error_rate(hyp, ref).distance == word_error_rate(hyp2, ref2).distance);
  }
}

TEST_CASE("golden boundary coverage values") {
  const int steps = 4, heads = 2;
  std::vector<std::vector<bool>> all(heads, std::vector<bool>(steps, true));
  std::vector<std::vector<bool>> half = {{true, true, true, true},
                                         {false, false, false, false}};
  DecodedUtterance full = make_utt("a", steps, heads, all, 10, {1, 2, 3});
  DecodedUtterance halfu = make_utt("b", steps, heads, half, 10, {1, 2, 3});
  CHECK(boundary_coverage(full) == doctest::Approx(100.0));
  CHECK(boundary_coverage(halfu) == doctest::Approx(50.0));

  Dataset refs = {make_ref("a", {1, 2, 3}, {1, 2, 3}), make_ref("b", {1, 2, 3}, {1, 2, 3})};
  EvalReport rep = evaluate({full, halfu}, refs);
  CHECK(rep.r_cov_percent == doctest::Approx(75.0));
}

TEST_CASE("golden streamability values") {
  const int steps = 3, heads = 2;
  std::vector<std::vector<bool>> all(heads, std::vector<bool>(steps, true));
  std::vector<std::vector<bool>> fail = {{true, true, true}, {true, false, true}};
  Dataset refs;
  std::vector<DecodedUtterance> four;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "u" + std::to_string(i);
    four.push_back(make_utt(id, steps, heads, i < 2 ? all : fail, 8, {1, 2}));
    refs.push_back(make_ref(id, {1, 2}, {1, 2}));
  }
  CHECK(evaluate(four, refs).r_str_percent == doctest::Approx(50.0));
  CHECK(evaluate({four[0], four[1]}, {refs[0], refs[1]}).r_str_percent == doctest::Approx(100.0));
  CHECK(evaluate({four[2]}, {refs[2]}).r_str_percent == doctest::Approx(0.0));
  CHECK(four[2].streamable == false);
  CHECK(evaluate({four[2]}, {refs[2]}).utterances[0].frames_streamed_fraction ==
        doctest::Approx(2.0 / 8.0));  // failure at the second step; hwm was 2 after the first
}

TEST_CASE("golden metrics parse from jsonl text") {
  const std::string line1 =
      R"({"id":"g1","tokens":[1,2],"score":-1.0,"forced_count":0,"streamable":true,)"
      R"("frames":6,"boundary_log":[[[1,0,1,0,1],[1,1,1,0,1]],[[1,0,2,0,1],[1,1,2,0,1]]],)"
      R"("beam_log":[{"hwm":2,"cands":[[[1,0,1,0,1],[1,1,1,0,1]]]},)"
      R"({"hwm":3,"cands":[[[1,0,2,0,1],[1,1,2,0,1]]]}]})";
  const std::string line2 =
      R"({"id":"g2","tokens":[1,2],"score":-1.0,"forced_count":0,"streamable":false,)"
      R"("frames":6,"boundary_log":[[[1,0,1,0,1],[1,1,7,0,0]],[[1,0,2,0,1],[1,1,7,0,0]]],)"
      R"("beam_log":[{"hwm":6,"cands":[[[1,0,1,0,1],[1,1,7,0,0]]]},)"
      R"({"hwm":6,"cands":[[[1,0,2,0,1],[1,1,7,0,0]]]}]})";
  const auto tmp = std::filesystem::temp_directory_path() / "mma_metrics_golden.jsonl";
  {
    std::ofstream f(tmp);
    f << line1 << "\n" << line2 << "\n";
  }
  auto decs = read_decodes_jsonl(tmp.string());
  Dataset refs = {make_ref("g1", {1, 2}, {1, 2}), make_ref("g2", {1, 2}, {1, 2})};
  EvalReport rep = evaluate(decs, refs);
  CHECK(rep.r_cov_percent == doctest::Approx(75.0));  // 100 and 50
  CHECK(rep.r_str_percent == doctest::Approx(50.0));
  CHECK(rep.wer_percent == doctest::Approx(0.0));
  std::filesystem::remove(tmp);
}

TEST_CASE("latency statistics") {
  const int heads = 1;
  auto pattern = std::vector<std::vector<bool>>(heads, std::vector<bool>(3, true));

  // detected boundaries at frames 2, 4, 6
  DecodedUtterance d = make_utt("z", 3, heads, pattern, 10, {5, 6, 7});
  for (int s = 0; s < 3; ++s) d.boundary_log[s].events[0].frame = 2 * (s + 1);

  SUBCASE("exact boundaries give zero delay") {
    Dataset refs = {make_ref("z", {5, 6, 7}, {2, 4, 6})};
    EvalReport rep = evaluate({d}, refs);
    REQUIRE(rep.mean_delay.has_value());
    CHECK(*rep.mean_delay == doctest::Approx(0.0));
    CHECK(*rep.max_delay == doctest::Approx(0.0));
  }
  SUBCASE("uniform +2 lag") {
    Dataset refs = {make_ref("z", {5, 6, 7}, {0, 2, 4})};
    EvalReport rep = evaluate({d}, refs);
    CHECK(*rep.mean_delay == doctest::Approx(2.0));
    CHECK(*rep.max_delay == doctest::Approx(2.0));
  }
  SUBCASE("mixed lags 0, 1, 3") {
    Dataset refs = {make_ref("z", {5, 6, 7}, {2, 3, 3})};
    EvalReport rep = evaluate({d}, refs);
    CHECK(*rep.mean_delay == doctest::Approx(4.0 / 3.0));
    CHECK(*rep.max_delay == doctest::Approx(3.0));
  }
  SUBCASE("length mismatch aligns matched pairs only") {
    // hypothesis has an extra token; only the matched ones contribute
    DecodedUtterance d2 = make_utt("z", 4, heads,
                                   std::vector<std::vector<bool>>(1, std::vector<bool>(4, true)),
                                   10, {5, 9, 6, 7});
    d2.boundary_log[0].events[0].frame = 2;
    d2.boundary_log[1].events[0].frame = 3;
    d2.boundary_log[2].events[0].frame = 4;
    d2.boundary_log[3].events[0].frame = 6;
    Dataset refs = {make_ref("z", {5, 6, 7}, {2, 4, 6})};
    EvalReport rep = evaluate({d2}, refs);
    CHECK(*rep.mean_delay == doctest::Approx(0.0));
  }
}

TEST_CASE("metrics are deterministic over the same records") {
  std::vector<std::vector<bool>> pat = {{true, false, true}, {true, true, true}};
  DecodedUtterance d = make_utt("x", 3, 2, pat, 9, {1, 2});
  Dataset refs = {make_ref("x", {1, 2}, {3, 6})};
  EvalReport a = evaluate({d}, refs);
  EvalReport b = evaluate({d}, refs);
  CHECK(a.r_cov_percent == b.r_cov_percent);
  CHECK(a.wer_percent == b.wer_percent);
  CHECK(a.mean_frames_streamed == b.mean_frames_streamed);
}
