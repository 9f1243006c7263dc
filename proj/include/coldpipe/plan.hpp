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
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "coldpipe/chain.hpp"
#include "coldpipe/common.hpp"
#include "coldpipe/model.hpp"

namespace coldpipe {

enum class LoadStrategy {
  PipelineParallel,
  FullCopyGpuConvert,  // checkpoint bytes cross PCIe, conversion on the GPU
  FullCopyCpuConvert,  // conversion in DRAM first, parameters cross PCIe
};

inline const char* to_string(LoadStrategy s) {
  switch (s) {
    case LoadStrategy::PipelineParallel: return "pipeline";
    case LoadStrategy::FullCopyGpuConvert: return "full_copy_gpu";
    case LoadStrategy::FullCopyCpuConvert: return "full_copy_cpu";
  }
  return "?";
}

inline std::optional<LoadStrategy> parse_strategy(const std::string& s) {
  if (s == "pipeline" || s == "pipeline_parallel") return LoadStrategy::PipelineParallel;
  if (s == "full_copy_gpu" || s == "serverlessllm") return LoadStrategy::FullCopyGpuConvert;
  if (s == "full_copy_cpu" || s == "transformers") return LoadStrategy::FullCopyCpuConvert;
  return std::nullopt;
}

inline bool is_full_copy(LoadStrategy s) { return s != LoadStrategy::PipelineParallel; }

/// Per-GPU loading orders. Vectors are indexed by GPU id.
struct LoadPlan {
  LoadStrategy strategy = LoadStrategy::PipelineParallel;
  std::vector<std::vector<int>> orders;
  // Adapter slices staged next to the GPU's first block segments.
  std::vector<std::vector<AdapterPart>> adapter_orders;
  // Segments a GPU must hold before it can serve its part of the chain.
  std::vector<std::vector<int>> blocks;
  // Adapter served by the GPU's own instance once it holds the full model.
  std::vector<std::optional<std::string>> owned_adapter;

  int gpu_count() const { return static_cast<int>(orders.size()); }
};

/// A unit of loading work: a base segment or an adapter slice.
struct TransferItem {
  std::variant<int, AdapterPart> what;

  bool is_segment() const { return std::holds_alternative<int>(what); }
  int segment_id() const { return is_segment() ? std::get<int>(what) : std::get<AdapterPart>(what).segment_id; }
  const AdapterPart& part() const { return std::get<AdapterPart>(what); }

  friend bool operator==(const TransferItem&, const TransferItem&) = default;
};

inline std::optional<std::string> default_owner(const std::vector<AdapterSpec>& adapters, int gpu) {
  if (adapters.empty()) return std::nullopt;
  return adapters[static_cast<std::size_t>(gpu) % adapters.size()].adapter_id;
}

/// Builds loading orders for `gpus` (ids into the plan; others stay empty).
/// Under PipelineParallel the i-th listed GPU starts at segment i and walks
/// the segments cyclically, so the first segments of all GPUs are disjoint.
inline LoadPlan plan_loading_over(LoadStrategy strategy, const ModelLayout& layout, const std::vector<int>& gpus,
                                  int gpu_count) {
  const int n = layout.segment_count();
  const int m = static_cast<int>(gpus.size());
  if (m < 1) throw DomainError("plan_loading: need at least one GPU");
  if (strategy == LoadStrategy::PipelineParallel && n != m)
    throw DomainError("plan_loading: pipeline loading needs one segment per GPU");
  LoadPlan plan;
  plan.strategy = strategy;
  plan.orders.assign(static_cast<std::size_t>(gpu_count), {});
  plan.adapter_orders.assign(static_cast<std::size_t>(gpu_count), {});
  plan.blocks.assign(static_cast<std::size_t>(gpu_count), {});
  plan.owned_adapter.assign(static_cast<std::size_t>(gpu_count), std::nullopt);
  for (int rank = 0; rank < m; ++rank) {
    const auto g = static_cast<std::size_t>(gpus[static_cast<std::size_t>(rank)]);
    plan.owned_adapter[g] = default_owner(layout.adapters, rank);
    auto& order = plan.orders[g];
    if (strategy == LoadStrategy::PipelineParallel) {
      for (int i = 0; i < n; ++i) order.push_back((rank + i) % n);
      plan.blocks[g] = {rank};
      for (const auto& a : layout.adapters) plan.adapter_orders[g].push_back(AdapterPart{a.adapter_id, rank});
    } else {
      for (int i = 0; i < n; ++i) order.push_back(i);
      plan.blocks[g] = order;
      if (plan.owned_adapter[g])
        for (int i = 0; i < n; ++i) plan.adapter_orders[g].push_back(AdapterPart{*plan.owned_adapter[g], i});
    }
  }
  return plan;
}

inline LoadPlan plan_loading(LoadStrategy strategy, const ModelLayout& layout, int gpu_count) {
  if (gpu_count < 1) throw DomainError("plan_loading: gpu_count must be >= 1");
  std::vector<int> gpus(static_cast<std::size_t>(gpu_count));
  for (int g = 0; g < gpu_count; ++g) gpus[static_cast<std::size_t>(g)] = g;
  return plan_loading_over(strategy, layout, gpus, gpu_count);
}

/// Next item the GPU should fetch, or nothing when it is fully loaded.
///
/// Demanded slices (`extra`) of held segments go first. Pipeline order: block
/// segments in plan order, and every held segment's slices of each staged
/// adapter before the next segment; then the remaining segments; then the
/// rest of the GPU's own adapter; then the remaining demanded slices.
/// Full-copy order: every segment, then the own adapter.
inline std::optional<TransferItem> next_transfer(const LoadPlan& plan, const GpuState& state,
                                                 const std::vector<AdapterPart>& extra = {}) {
  const auto g = static_cast<std::size_t>(state.gpu_id);
  if (g >= plan.orders.size()) return std::nullopt;
  const auto& order = plan.orders[g];
  const auto& staged = plan.adapter_orders[g];
  const auto& block = plan.blocks[g];
  auto in_block = [&](int seg) { return std::find(block.begin(), block.end(), seg) != block.end(); };
  auto missing_part = [&](const AdapterPart& p) { return !state.holds_part(p.adapter_id, p.segment_id); };

  // On-demand slices for the running chain come first: they gate service.
  for (const auto& p : extra)
    if (state.holds_segment(p.segment_id) && missing_part(p)) return TransferItem{p};

  if (plan.strategy == LoadStrategy::PipelineParallel) {
    // Any held segment may serve as a chain stage, so its slices of every
    // adapter follow it before the next segment.
    std::vector<std::string> ids;
    for (const auto& p : staged)
      if (std::find(ids.begin(), ids.end(), p.adapter_id) == ids.end()) ids.push_back(p.adapter_id);
    for (int seg : order) {
      if (!in_block(seg)) continue;
      if (!state.holds_segment(seg)) return TransferItem{seg};
      for (const auto& a : ids)
        if (missing_part({a, seg})) return TransferItem{AdapterPart{a, seg}};
    }
    for (int seg : order) {
      if (!state.holds_segment(seg)) continue;
      for (const auto& a : ids)
        if (missing_part({a, seg})) return TransferItem{AdapterPart{a, seg}};
    }
  }
  for (int seg : order)
    if (!state.holds_segment(seg)) return TransferItem{seg};
  for (const auto& p : staged)
    if (missing_part(p)) return TransferItem{p};
  if (plan.owned_adapter[g]) {
    for (int seg : order) {
      AdapterPart p{*plan.owned_adapter[g], seg};
      if (missing_part(p)) return TransferItem{p};
    }
  }
  for (const auto& p : extra)
    if (missing_part(p)) return TransferItem{p};
  return std::nullopt;
}

/// Earliest complete chain over the loaded segments, if any.
inline std::optional<PipelineChain> ready_to_infer(const std::vector<GpuState>& states, const ModelLayout& layout) {
  return find_pipeline_chain(states, layout);
}

/// Drops adapter slices of adapters the GPU's converged instance does not
/// serve. Only legal once the GPU holds the full base model.
inline GpuState discard_surplus_adapter_parts(GpuState state, const std::set<std::string>& owned_adapters,
                                              const ModelLayout& layout) {
  if (!holds_full_model(state, layout))
    throw ProtocolError("discard_surplus_adapter_parts: GPU " + std::to_string(state.gpu_id) +
                        " does not hold the full model yet");
  for (auto it = state.loaded_adapter_parts.begin(); it != state.loaded_adapter_parts.end();) {
    if (owned_adapters.count(it->adapter_id) == 0) {
      state.hbm_used -= layout.part_bytes(*it);
      it = state.loaded_adapter_parts.erase(it);
    } else {
      ++it;
    }
  }
  return state;
}

}  // namespace coldpipe
