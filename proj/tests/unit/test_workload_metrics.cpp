// Copyright 2026 The coldpipe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"

namespace coldpipe {
namespace {

TEST(Workload, BurstArrivesAtZero) {
  WorkloadSpec w;
  w.arrival = ArrivalKind::Burst;
  w.count = 7;
  const auto reqs = generate_workload(w, {});
  ASSERT_EQ(reqs.size(), 7u);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(reqs[i].arrival_time, 0);
    EXPECT_EQ(reqs[i].request_id, static_cast<RequestId>(i));
    EXPECT_EQ(reqs[i].prompt_tokens, 64);
    EXPECT_EQ(reqs[i].adapter_id, "");
  }
}

TEST(Workload, PoissonCountWithinFourSigma) {
  WorkloadSpec w;
  w.arrival = ArrivalKind::Poisson;
  w.rate = 10.0;
  w.duration = 10.0;
  const double mean = w.rate * w.duration;
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    w.seed = seed;
    const auto reqs = generate_workload(w, {});
    const double n = static_cast<double>(reqs.size());
    EXPECT_LE(std::abs(n - mean), 4.0 * std::sqrt(mean)) << "seed " << seed;
    for (std::size_t i = 1; i < reqs.size(); ++i) EXPECT_LE(reqs[i - 1].arrival_time, reqs[i].arrival_time);
    if (!reqs.empty()) {
      EXPECT_LT(reqs.back().arrival_time, to_nanos(w.duration));
    }
    total += n;
  }
  EXPECT_NEAR(total / 100.0, mean, 4.0 * std::sqrt(mean / 100.0));
}

TEST(Workload, SameSeedSameRequests) {
  WorkloadSpec w;
  w.arrival = ArrivalKind::Poisson;
  w.rate = 20.0;
  w.prompt.kind = LengthDistribution::Kind::LogNormal;
  w.adapter_switch_probability = 0.3;
  w.seed = 9;
  const auto a = generate_workload(w, {"x", "y", "z"});
  const auto b = generate_workload(w, {"x", "y", "z"});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].arrival_time, b[i].arrival_time);
    EXPECT_EQ(a[i].prompt_tokens, b[i].prompt_tokens);
    EXPECT_EQ(a[i].adapter_id, b[i].adapter_id);
  }
  w.seed = 10;
  const auto c = generate_workload(w, {"x", "y", "z"});
  EXPECT_FALSE(c.size() == a.size() && c.front().arrival_time == a.front().arrival_time);
}

TEST(Workload, LengthsStayInBounds) {
  WorkloadSpec w;
  w.count = 500;
  w.prompt.kind = LengthDistribution::Kind::LogNormal;
  w.prompt.mu = 5.0;
  w.prompt.sigma = 2.0;
  w.prompt.min = 8;
  w.prompt.max = 300;
  for (const auto& r : generate_workload(w, {})) {
    EXPECT_GE(r.prompt_tokens, 8);
    EXPECT_LE(r.prompt_tokens, 300);
  }
}

TEST(Workload, SwitchProbabilityControlsAdapterChanges) {
  WorkloadSpec w;
  w.count = 2000;
  w.adapter_switch_probability = 0.0;
  std::set<std::string> seen;
  for (const auto& r : generate_workload(w, {"a", "b", "c"})) seen.insert(r.adapter_id);
  EXPECT_EQ(seen, (std::set<std::string>{"a"}));

  w.adapter_switch_probability = 1.0;
  auto reqs = generate_workload(w, {"a", "b", "c"});
  for (std::size_t i = 1; i < reqs.size(); ++i) EXPECT_NE(reqs[i].adapter_id, reqs[i - 1].adapter_id);

  w.adapter_switch_probability = 0.2;
  reqs = generate_workload(w, {"a", "b"});
  std::vector<std::string> ids;
  for (const auto& r : reqs) ids.push_back(r.adapter_id);
  const double rate = static_cast<double>(count_eager_switches(ids)) / static_cast<double>(ids.size() - 1);
  EXPECT_NEAR(rate, 0.2, 4.0 * std::sqrt(0.2 * 0.8 / 1999.0));
}

TEST(Workload, TraceFormat) {
  std::istringstream in("# t prompt new adapter\n\n200 10 5 a\n100,3,2,-\n 150 7 1\n");
  const auto reqs = parse_trace_workload(in);
  ASSERT_EQ(reqs.size(), 3u);
  EXPECT_EQ(reqs[0].arrival_time, 100);
  EXPECT_EQ(reqs[0].adapter_id, "");
  EXPECT_EQ(reqs[1].arrival_time, 150);
  EXPECT_EQ(reqs[2].adapter_id, "a");
  EXPECT_EQ(reqs[2].prompt_tokens, 10);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(reqs[i].request_id, static_cast<RequestId>(i));
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_trace_workload(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(Workload, TraceErrorsNameTheLine) {
  EXPECT_EQ(parse_error_line("0 1 1 a\nx 1 1 a\n"), 2u);
  EXPECT_EQ(parse_error_line("0 1 1 a\n\n5 1\n"), 3u);
  EXPECT_EQ(parse_error_line("0 0 1 a\n"), 1u);
  EXPECT_EQ(parse_error_line("0 1 1 a b\n"), 1u);
  EXPECT_EQ(parse_error_line("-4 1 1\n"), 1u);
  EXPECT_EQ(parse_error_line("1.5 1 1\n"), 1u);
  std::istringstream in("0 1 1\nq 1 1\n");
  try {
    parse_trace_workload(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Workload, MissingTraceFileIsConfigError) {
  WorkloadSpec w;
  w.arrival = ArrivalKind::TraceFile;
  w.trace_path = "/nonexistent/trace.txt";
  EXPECT_THROW(generate_workload(w, {}), ConfigError);
}

TraceRecord rec(TraceKind k, Nanos t, std::int64_t request = -1, std::int64_t count = 1) {
  TraceRecord r;
  r.kind = k;
  r.time = t;
  r.request = request;
  r.count = count;
  return r;
}

TEST(Metrics, SummaryStatistics) {
  const auto s = summarize({4.0, 1.0, 3.0, 2.0});
  EXPECT_EQ(s.count, 4);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.variance, 1.25);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.max, 4.0);
  EXPECT_DOUBLE_EQ(s.p50, 2.5);
  EXPECT_DOUBLE_EQ(s.p90, 3.7);
  EXPECT_TRUE(summarize({}).empty());
  EXPECT_DOUBLE_EQ(percentile({5.0}, 0.99), 5.0);
}

TEST(Metrics, TtftAndLatencyFromTrace) {
  Trace t;
  t.add(rec(TraceKind::Arrival, to_nanos(1.0), 0));
  t.add(rec(TraceKind::Arrival, to_nanos(2.0), 1));
  t.add(rec(TraceKind::FirstToken, to_nanos(1.5), 0));
  t.add(rec(TraceKind::FirstToken, to_nanos(2.25), 1));
  t.add(rec(TraceKind::RequestDone, to_nanos(3.0), 0, 4));
  EXPECT_DOUBLE_EQ(ttft_by_request(t).at(0), 0.5);
  EXPECT_DOUBLE_EQ(compute_ttft_stats(t).mean, 0.375);
  const auto lat = latency_by_request(t);
  EXPECT_EQ(lat.size(), 1u);
  EXPECT_DOUBLE_EQ(lat.at(0), 2.0);
  EXPECT_EQ(tokens_by_request(t).at(0), 5);
}

TEST(Metrics, SteadyTokenStreamGivesFlatThroughput) {
  Trace t;
  for (int i = 0; i < 100; ++i) t.add(rec(i == 0 ? TraceKind::FirstToken : TraceKind::Token, to_nanos(0.01 * i + 0.005), 0));
  const auto tl = throughput_timeline(t, 0.1);
  ASSERT_EQ(tl.size(), 10u);
  for (const auto& p : tl) EXPECT_NEAR(p.tokens_per_second, 100.0, 1e-9);
  EXPECT_DOUBLE_EQ(tl[3].bin_start, 0.3);
  EXPECT_THROW(throughput_timeline(t, 0.0), QueryError);
  EXPECT_TRUE(throughput_timeline(Trace{}, 0.1).empty());
}

TEST(Metrics, TokenConservationAcrossBins) {
  Trace t;
  std::mt19937_64 rng(3);
  std::int64_t expected = 0;
  for (int i = 0; i < 500; ++i) {
    const auto c = static_cast<std::int64_t>(1 + rng() % 4);
    t.add(rec(TraceKind::Token, static_cast<Nanos>(rng() % 3'000'000'000ULL), 0, c));
    expected += c;
  }
  EXPECT_EQ(total_tokens(t), expected);
  for (double bin : {0.01, 0.1, 0.7, 5.0}) {
    double sum = 0.0;
    for (const auto& p : throughput_timeline(t, bin)) sum += p.tokens_per_second * bin;
    EXPECT_NEAR(sum, static_cast<double>(expected), 1e-6 * static_cast<double>(expected)) << bin;
  }
}

TEST(Metrics, StartupBreakdownSumsToTotal) {
  Trace t;
  t.add(rec(TraceKind::CheckpointLoaded, to_nanos(1.0)));
  t.add(rec(TraceKind::LoraCheckpointLoaded, to_nanos(1.25)));
  t.add(rec(TraceKind::InitDone, to_nanos(1.5)));
  t.add(rec(TraceKind::BaseReady, to_nanos(3.0)));
  t.add(rec(TraceKind::Ready, to_nanos(3.5)));
  t.add(rec(TraceKind::FirstToken, to_nanos(4.0), 0));
  const auto b = startup_breakdown(t);
  EXPECT_DOUBLE_EQ(b.load_ckpt_dram, 1.0);
  EXPECT_DOUBLE_EQ(b.load_lora_ckpt_dram, 0.25);
  EXPECT_DOUBLE_EQ(b.init_meta, 0.25);
  EXPECT_DOUBLE_EQ(b.load_params_gpu, 1.5);
  EXPECT_DOUBLE_EQ(b.load_lora_params_gpu, 0.5);
  EXPECT_DOUBLE_EQ(b.prefill, 0.5);
  EXPECT_DOUBLE_EQ(b.total, 4.0);
  EXPECT_NEAR(b.loading() + b.prefill, b.total, 1e-12);
  EXPECT_DOUBLE_EQ(b.loading_fraction(), 3.5 / 4.0);
  EXPECT_DOUBLE_EQ(b.lora_fraction(), 0.75 / 4.0);
}

TEST(Metrics, RecoveryTimeAndHaltGap) {
  Trace t;
  t.add(rec(TraceKind::Token, to_nanos(1.0), 0));
  t.add(rec(TraceKind::Crash, to_nanos(1.5)));
  auto seg = rec(TraceKind::ConvertDone, to_nanos(2.0));
  seg.segment = 1;
  t.add(seg);
  t.add(rec(TraceKind::Token, to_nanos(2.5), 0));
  EXPECT_DOUBLE_EQ(measure_recovery_time(t), 1.0);
  EXPECT_DOUBLE_EQ(measure_recovery_time(t, ResumeDefinition::NextSegment), 0.5);
  EXPECT_DOUBLE_EQ(halt_gap(t), 1.5);
  EXPECT_THROW(measure_recovery_time(Trace{}), QueryError);
  EXPECT_THROW(halt_gap(Trace{}), QueryError);
}

TEST(LinkAudit, FlagsOverlapAndOverspeed) {
  Trace t;
  auto a = rec(TraceKind::TransferDone, 1000);
  a.gpu = 0;
  a.start = 0;
  a.bytes = 10;
  t.add(a);
  EXPECT_TRUE(audit_link_capacity(t, 1e10, 1e10, 0.0).empty());
  auto b = a;
  b.start = 500;
  b.time = 1500;
  t.add(b);
  EXPECT_EQ(audit_link_capacity(t, 1e10, 1e10, 0.0).size(), 1u);
  Trace fast;
  a.bytes = 2000;
  fast.add(a);
  EXPECT_EQ(audit_link_capacity(fast, 1e9, 1e9, 0.0).size(), 1u);
}

}  // namespace
}  // namespace coldpipe
