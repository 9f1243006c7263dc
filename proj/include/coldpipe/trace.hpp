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
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "coldpipe/common.hpp"
#include "coldpipe/workload.hpp"

namespace coldpipe {

enum class TraceKind {
  Arrival,
  Rejected,
  CheckpointLoaded,     // SSD -> DRAM, base model
  LoraCheckpointLoaded, // SSD -> DRAM, adapters
  InitDone,
  TransferDone,         // PCIe transfer [start, time]
  TransferAborted,
  ConvertDone,          // item usable on the GPU
  StageCompute,         // [start, time] on gpu
  Hop,                  // hidden states gpu -> peer, [start, time]
  Merge,                // adapter merge on gpu, [start, time]
  FirstToken,
  Token,
  RequestDone,
  BaseReady,            // a base-model chain exists
  Ready,                // chain plus adapter slices: service can start
  InstanceReady,        // one GPU holds its full instance
  ChainFormed,
  Switch,
  Discard,
  EpochSwitch,
  Crash,
  CrashSkipped,
  RecoveryStart,
  Reassign,
  FullRestart,
  Unrecoverable,
};

inline const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Arrival: return "arrival";
    case TraceKind::Rejected: return "rejected";
    case TraceKind::CheckpointLoaded: return "checkpoint_loaded";
    case TraceKind::LoraCheckpointLoaded: return "lora_checkpoint_loaded";
    case TraceKind::InitDone: return "init_done";
    case TraceKind::TransferDone: return "transfer_done";
    case TraceKind::TransferAborted: return "transfer_aborted";
    case TraceKind::ConvertDone: return "convert_done";
    case TraceKind::StageCompute: return "stage_compute";
    case TraceKind::Hop: return "hop";
    case TraceKind::Merge: return "merge";
    case TraceKind::FirstToken: return "first_token";
    case TraceKind::Token: return "token";
    case TraceKind::RequestDone: return "request_done";
    case TraceKind::BaseReady: return "base_ready";
    case TraceKind::Ready: return "ready";
    case TraceKind::InstanceReady: return "instance_ready";
    case TraceKind::ChainFormed: return "chain_formed";
    case TraceKind::Switch: return "switch";
    case TraceKind::Discard: return "discard";
    case TraceKind::EpochSwitch: return "epoch_switch";
    case TraceKind::Crash: return "crash";
    case TraceKind::CrashSkipped: return "crash_skipped";
    case TraceKind::RecoveryStart: return "recovery_start";
    case TraceKind::Reassign: return "reassign";
    case TraceKind::FullRestart: return "full_restart";
    case TraceKind::Unrecoverable: return "unrecoverable";
  }
  return "?";
}

struct TraceRecord {
  Nanos time = 0;
  TraceKind kind = TraceKind::Arrival;
  int gpu = -1;
  int peer = -1;
  std::int64_t request = -1;
  std::int64_t batch = -1;
  int segment = -1;
  std::string adapter;
  std::int64_t count = 0;
  Bytes bytes = 0;
  Nanos start = 0;
  std::string detail;
};

struct Trace {
  std::vector<TraceRecord> records;

  void add(TraceRecord r) { records.push_back(std::move(r)); }

  std::vector<const TraceRecord*> of(TraceKind k) const {
    std::vector<const TraceRecord*> out;
    for (const auto& r : records)
      if (r.kind == k) out.push_back(&r);
    return out;
  }

  const TraceRecord* first(TraceKind k) const {
    for (const auto& r : records)
      if (r.kind == k) return &r;
    return nullptr;
  }

  /// Stable digest of every record, for determinism and replay checks.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : records) {
      const std::string line = std::to_string(r.time) + '|' + to_string(r.kind) + '|' + std::to_string(r.gpu) + '|' +
                               std::to_string(r.peer) + '|' + std::to_string(r.request) + '|' +
                               std::to_string(r.batch) + '|' + std::to_string(r.segment) + '|' + r.adapter + '|' +
                               std::to_string(r.count) + '|' + std::to_string(r.bytes) + '|' +
                               std::to_string(r.start) + '|' + r.detail + '\n';
      h = fnv1a64(line, h);
    }
    return h;
  }
};

struct AuditFinding {
  std::string message;
};

/// Checks every PCIe link and every GPU-pair hop channel: transfers on one
/// channel never overlap, and no channel moves more than bandwidth x elapsed.
inline std::vector<AuditFinding> audit_link_capacity(const Trace& trace, double pcie_bandwidth,
                                                     double interconnect_bandwidth, double interconnect_base_latency) {
  std::vector<AuditFinding> findings;
  std::map<std::pair<int, int>, std::vector<const TraceRecord*>> channels;  // (gpu, peer); peer -1 is PCIe
  for (const auto& r : trace.records) {
    if (r.kind == TraceKind::TransferDone || r.kind == TraceKind::TransferAborted)
      channels[{r.gpu, -1}].push_back(&r);
    else if (r.kind == TraceKind::Hop)
      channels[{r.gpu, r.peer}].push_back(&r);
  }
  for (auto& [key, recs] : channels) {
    std::sort(recs.begin(), recs.end(), [](const TraceRecord* a, const TraceRecord* b) {
      return a->start != b->start ? a->start < b->start : a->time < b->time;
    });
    const bool pcie = key.second < 0;
    const double bw = pcie ? pcie_bandwidth : interconnect_bandwidth;
    const Nanos base = pcie ? 0 : to_nanos(interconnect_base_latency);
    Nanos busy_until = std::numeric_limits<Nanos>::min();
    for (const auto* r : recs) {
      const std::string where = "gpu " + std::to_string(key.first) + (pcie ? " pcie" : " -> " + std::to_string(key.second));
      if (r->start < busy_until)
        findings.push_back({where + ": overlapping transfers at t=" + std::to_string(r->start)});
      busy_until = std::max(busy_until, r->time);
      const long double elapsed = static_cast<long double>(r->time - r->start - (r->bytes > 0 ? base : 0));
      const long double capacity = static_cast<long double>(bw) * elapsed / 1e9L;
      if (static_cast<long double>(r->bytes) > capacity + 1.0L)
        findings.push_back({where + ": " + std::to_string(r->bytes) + " bytes exceed capacity over [" +
                            std::to_string(r->start) + ", " + std::to_string(r->time) + "]"});
    }
  }
  return findings;
}

}  // namespace coldpipe
