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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "coldpipe/common.hpp"
#include "coldpipe/trace.hpp"

namespace coldpipe {

struct Stats {
  std::int64_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // population
  double min = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double max = 0.0;

  bool empty() const { return count == 0; }
};

/// Linear interpolation between closest ranks; `sorted` must be ascending.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

inline Stats summarize(std::vector<double> xs) {
  Stats s;
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  s.count = static_cast<std::int64_t>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.variance = sq / static_cast<double>(xs.size());
  s.min = xs.front();
  s.max = xs.back();
  s.p50 = percentile(xs, 0.5);
  s.p90 = percentile(xs, 0.9);
  s.p99 = percentile(xs, 0.99);
  return s;
}

inline std::map<std::int64_t, Nanos> arrival_times(const Trace& trace) {
  std::map<std::int64_t, Nanos> out;
  for (const auto& r : trace.records)
    if (r.kind == TraceKind::Arrival) out[r.request] = r.time;
  return out;
}

/// Seconds from arrival to first token, per request, in request order.
inline std::map<std::int64_t, double> ttft_by_request(const Trace& trace) {
  const auto arrivals = arrival_times(trace);
  std::map<std::int64_t, double> out;
  for (const auto& r : trace.records) {
    if (r.kind != TraceKind::FirstToken) continue;
    auto it = arrivals.find(r.request);
    if (it != arrivals.end() && !out.count(r.request)) out[r.request] = to_seconds(r.time - it->second);
  }
  return out;
}

inline Stats compute_ttft_stats(const Trace& trace) {
  std::vector<double> xs;
  for (const auto& [id, t] : ttft_by_request(trace)) xs.push_back(t);
  return summarize(std::move(xs));
}

/// Completion latency: arrival to last token.
inline std::map<std::int64_t, double> latency_by_request(const Trace& trace) {
  const auto arrivals = arrival_times(trace);
  std::map<std::int64_t, double> out;
  for (const auto& r : trace.records) {
    if (r.kind != TraceKind::RequestDone) continue;
    auto it = arrivals.find(r.request);
    if (it != arrivals.end()) out[r.request] = to_seconds(r.time - it->second);
  }
  return out;
}

inline Stats latency_stats(const Trace& trace) {
  std::vector<double> xs;
  for (const auto& [id, t] : latency_by_request(trace)) xs.push_back(t);
  return summarize(std::move(xs));
}

inline bool is_token(const TraceRecord& r) { return r.kind == TraceKind::FirstToken || r.kind == TraceKind::Token; }

inline std::int64_t total_tokens(const Trace& trace) {
  std::int64_t n = 0;
  for (const auto& r : trace.records)
    if (is_token(r)) n += r.count;
  return n;
}

struct ThroughputPoint {
  double bin_start = 0.0;
  double tokens_per_second = 0.0;
};

/// Tokens per second in uniform bins from t = 0 through the last token.
inline std::vector<ThroughputPoint> throughput_timeline(const Trace& trace, double bin_seconds) {
  if (!(bin_seconds > 0.0)) throw QueryError("throughput bin must be > 0");
  const Nanos bin = std::max<Nanos>(1, to_nanos(bin_seconds));
  Nanos last = -1;
  for (const auto& r : trace.records)
    if (is_token(r)) last = std::max(last, r.time);
  std::vector<ThroughputPoint> out;
  if (last < 0) return out;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(last / bin + 1), 0);
  for (const auto& r : trace.records)
    if (is_token(r)) counts[static_cast<std::size_t>(r.time / bin)] += r.count;
  const double width = to_seconds(bin);
  for (std::size_t i = 0; i < counts.size(); ++i)
    out.push_back({to_seconds(static_cast<Nanos>(i) * bin), static_cast<double>(counts[i]) / width});
  return out;
}

struct StartupBreakdown {
  double load_ckpt_dram = 0.0;
  double load_lora_ckpt_dram = 0.0;
  double init_meta = 0.0;
  double load_params_gpu = 0.0;
  double load_lora_params_gpu = 0.0;
  double prefill = 0.0;
  double total = 0.0;

  double loading() const {
    return load_ckpt_dram + load_lora_ckpt_dram + init_meta + load_params_gpu + load_lora_params_gpu;
  }
  double loading_fraction() const { return total > 0.0 ? loading() / total : 0.0; }
  double lora_fraction() const { return total > 0.0 ? (load_lora_ckpt_dram + load_lora_params_gpu) / total : 0.0; }
};

/// Attributes the time to the first token to the startup stages, using the
/// first occurrence of each milestone. A warm start reports zeros.
inline StartupBreakdown startup_breakdown(const Trace& trace) {
  StartupBreakdown b;
  const auto* first_token = trace.first(TraceKind::FirstToken);
  const auto* init = trace.first(TraceKind::InitDone);
  if (!first_token || !init) return b;
  // Later milestones never precede earlier ones.
  std::vector<Nanos> marks;
  for (TraceKind k : {TraceKind::CheckpointLoaded, TraceKind::LoraCheckpointLoaded, TraceKind::InitDone,
                      TraceKind::BaseReady, TraceKind::Ready}) {
    const auto* r = trace.first(k);
    Nanos t = r ? r->time : (marks.empty() ? 0 : marks.back());
    if (!marks.empty()) t = std::max(t, marks.back());
    marks.push_back(std::min(t, first_token->time));
  }
  Nanos prev = 0;
  double* slots[] = {&b.load_ckpt_dram, &b.load_lora_ckpt_dram, &b.init_meta, &b.load_params_gpu,
                     &b.load_lora_params_gpu};
  for (std::size_t i = 0; i < marks.size(); ++i) {
    *slots[i] = to_seconds(marks[i] - prev);
    prev = marks[i];
  }
  b.prefill = to_seconds(first_token->time - prev);
  b.total = to_seconds(first_token->time);
  return b;
}

enum class ResumeDefinition { NextToken, NextSegment };

/// Seconds from each applied crash until service resumes. With NextToken,
/// a crash after which no token follows is measured to the next segment.
inline std::vector<double> measure_recovery_times(const Trace& trace,
                                                  ResumeDefinition def = ResumeDefinition::NextToken) {
  const auto crashes = trace.of(TraceKind::Crash);
  if (crashes.empty()) throw QueryError("trace contains no crash");
  std::vector<double> out;
  for (const auto* c : crashes) {
    std::optional<Nanos> token, segment;
    for (const auto& r : trace.records) {
      if (r.time < c->time) continue;
      if (!token && is_token(r)) token = r.time;
      if (!segment && r.kind == TraceKind::ConvertDone && r.adapter.empty()) segment = r.time;
    }
    std::optional<Nanos> resume = def == ResumeDefinition::NextToken && token ? token : segment;
    if (resume) out.push_back(to_seconds(*resume - c->time));
  }
  return out;
}

inline double measure_recovery_time(const Trace& trace, ResumeDefinition def = ResumeDefinition::NextToken) {
  const auto all = measure_recovery_times(trace, def);
  if (all.empty()) throw QueryError("service never resumed after the crash");
  return all.front();
}

/// Longest stretch without any token that spans the first crash.
inline double halt_gap(const Trace& trace) {
  const auto* crash = trace.first(TraceKind::Crash);
  if (!crash) throw QueryError("trace contains no crash");
  Nanos before = 0;
  std::optional<Nanos> after;
  for (const auto& r : trace.records) {
    if (!is_token(r)) continue;
    if (r.time <= crash->time) before = std::max(before, r.time);
    else if (!after) after = r.time;
  }
  if (!after) throw QueryError("no token after the crash");
  return to_seconds(*after - before);
}

/// Tokens emitted per request.
inline std::map<std::int64_t, std::int64_t> tokens_by_request(const Trace& trace) {
  std::map<std::int64_t, std::int64_t> out;
  for (const auto& r : trace.records)
    if (r.kind == TraceKind::RequestDone) out[r.request] = r.count + 1;
  return out;
}

}  // namespace coldpipe
