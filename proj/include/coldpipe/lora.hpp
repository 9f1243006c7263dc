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
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coldpipe/cluster.hpp"
#include "coldpipe/common.hpp"
#include "coldpipe/request.hpp"

namespace coldpipe {

enum class LoraMode { Merged, Unmerged };
enum class LoraScheduling { Epoch, Eager };

struct EpochConfig {
  double epoch_length = 0.05;
  // A queue left unserved for more epochs than this is scheduled next.
  int starvation_epochs = 3;
};

/// Per-adapter FIFO queues. The empty key holds base-model requests.
using AdapterQueues = std::map<std::string, std::deque<RequestId>>;

struct EnqueueOutcome {
  bool accepted = true;
  std::string error;
};

/// Appends the request to its adapter's queue. Unknown adapters are rejected.
inline EnqueueOutcome enqueue_by_adapter(const Request& request, AdapterQueues& queues,
                                         const std::set<std::string>& known_adapters) {
  if (!request.adapter_id.empty() && known_adapters.count(request.adapter_id) == 0)
    return {false, "unknown adapter '" + request.adapter_id + "' for request " + std::to_string(request.request_id)};
  queues[request.adapter_id].push_back(request.request_id);
  return {};
}

struct SwitchDirective {
  std::string next_adapter;
  bool forced_by_starvation = false;
};

/// Adapter scheduling state of one executor.
struct EpochState {
  std::string active_adapter;
  Nanos epoch_started = 0;
  // Epoch boundaries each adapter has waited through with pending work.
  std::map<std::string, int> waited_epochs;
};

/// Called at an epoch boundary. `pending` maps adapter -> outstanding work
/// (queued, decoding or rebuilding requests). Switches round-robin to the
/// next adapter with work, or to a starving one first.
inline std::optional<SwitchDirective> epoch_tick(Nanos now, const std::map<std::string, std::int64_t>& pending,
                                                 EpochState& state, const EpochConfig& config) {
  if (now - state.epoch_started < to_nanos(config.epoch_length)) return std::nullopt;
  std::vector<std::string> waiting;
  for (const auto& [adapter, count] : pending)
    if (count > 0 && adapter != state.active_adapter) waiting.push_back(adapter);
  for (const auto& a : waiting) ++state.waited_epochs[a];
  if (waiting.empty()) {
    state.epoch_started = now;
    return std::nullopt;
  }
  SwitchDirective d;
  // Starving adapters first, oldest wait wins, ties by name.
  int worst = config.starvation_epochs;
  for (const auto& a : waiting) {
    const int w = state.waited_epochs[a];
    if (w > worst) {
      worst = w;
      d.next_adapter = a;
      d.forced_by_starvation = true;
    }
  }
  if (!d.forced_by_starvation) {
    auto it = std::upper_bound(waiting.begin(), waiting.end(), state.active_adapter);
    d.next_adapter = it == waiting.end() ? waiting.front() : *it;
  }
  state.active_adapter = d.next_adapter;
  state.epoch_started = now;
  state.waited_epochs[d.next_adapter] = 0;
  return d;
}

/// Timed merge of one stage during a sequential adapter switch.
struct StageMerge {
  int stage = 0;
  double start = 0.0;
  double end = 0.0;
};

/// Stage i starts merging once it finished the last pre-switch batch handed
/// to it (`last_old_batch_done[i]`) and not before stage i-1 started.
inline std::vector<StageMerge> apply_switch_sequentially(const std::vector<double>& last_old_batch_done,
                                                         const std::vector<Bytes>& old_bytes_per_stage,
                                                         const std::vector<Bytes>& new_bytes_per_stage,
                                                         double merge_rate) {
  std::vector<StageMerge> merges;
  double previous_start = 0.0;
  for (std::size_t i = 0; i < last_old_batch_done.size(); ++i) {
    StageMerge m;
    m.stage = static_cast<int>(i);
    m.start = std::max(last_old_batch_done[i], previous_start);
    m.end = m.start + merge_time(old_bytes_per_stage[i], new_bytes_per_stage[i], merge_rate);
    previous_start = m.start;
    merges.push_back(m);
  }
  return merges;
}

/// Adapter changes when requests are served strictly in arrival order.
inline std::int64_t count_eager_switches(const std::vector<std::string>& arrival_adapters) {
  std::int64_t switches = 0;
  for (std::size_t i = 1; i < arrival_adapters.size(); ++i)
    if (arrival_adapters[i] != arrival_adapters[i - 1]) ++switches;
  return switches;
}

/// Number of queued requests admitted so that active work never exceeds
/// max_batch_size (continuous batching admission).
inline std::int64_t continuous_batch_admit(std::int64_t queued, std::int64_t active, std::int64_t max_batch_size) {
  return std::clamp<std::int64_t>(max_batch_size - active, 0, queued);
}

}  // namespace coldpipe
