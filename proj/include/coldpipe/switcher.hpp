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

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coldpipe/chain.hpp"
#include "coldpipe/common.hpp"
#include "coldpipe/plan.hpp"
#include "coldpipe/request.hpp"

namespace coldpipe {

struct SwitchState {
  ExecutionMode mode = ExecutionMode::PipelineParallel;
  std::optional<Nanos> switch_time;
  // Requests admitted to the pipeline before the switch; they drain there.
  std::set<RequestId> drain_set;
};

/// True once every alive GPU holds the full model and every slice of the
/// adapter its instance owns. Crashed GPUs do not block the switch.
inline bool check_switch(const std::vector<GpuState>& states, const ModelLayout& layout, const LoadPlan& plan) {
  bool any_alive = false;
  for (const auto& st : states) {
    if (!st.alive) continue;
    any_alive = true;
    if (!holds_full_model(st, layout)) return false;
    const auto& owned = plan.owned_adapter.at(static_cast<std::size_t>(st.gpu_id));
    if (owned)
      for (const auto& seg : layout.segments)
        if (!st.holds_part(*owned, seg.segment_id)) return false;
  }
  return any_alive;
}

/// What the router sees of a GPU.
struct GpuView {
  int gpu_id = 0;
  bool alive = true;
  std::string merged_adapter;
  // Holds every slice of the requested adapter.
  bool has_adapter = false;
  Bytes merged_bytes = 0;
};

struct RouteTarget {
  bool pipeline = false;
  int gpu_id = -1;
};

/// Assigns post-switch work to single GPUs: prefer a GPU that already has
/// the adapter merged, then one that holds its slices, then the cheapest
/// merge. Ties rotate round-robin.
class Router {
 public:
  RouteTarget route(bool admitted_before_switch, const SwitchState& state, const std::string& adapter,
                    const std::vector<GpuView>& gpus) {
    if (state.mode == ExecutionMode::PipelineParallel || admitted_before_switch) return RouteTarget{true, -1};
    return RouteTarget{false, pick(adapter, gpus)};
  }

  int pick(const std::string& adapter, const std::vector<GpuView>& gpus) {
    auto tier = [&](const GpuView& g) -> std::pair<int, Bytes> {
      if (g.merged_adapter == adapter) return {0, 0};
      if (g.has_adapter) return {1, g.merged_bytes};
      return {2, g.merged_bytes};
    };
    std::optional<std::pair<int, Bytes>> best;
    for (const auto& g : gpus) {
      if (!g.alive) continue;
      auto t = tier(g);
      if (!best || t < *best) best = t;
    }
    if (!best) return -1;
    std::vector<int> ties;
    for (const auto& g : gpus)
      if (g.alive && tier(g) == *best) ties.push_back(g.gpu_id);
    // Rotate: first tied GPU strictly after the last one picked.
    int chosen = ties.front();
    for (int id : ties) {
      if (id > last_) {
        chosen = id;
        break;
      }
    }
    last_ = chosen;
    return chosen;
  }

 private:
  int last_ = -1;
};

}  // namespace coldpipe
