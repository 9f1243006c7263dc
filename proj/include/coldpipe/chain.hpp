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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "coldpipe/common.hpp"
#include "coldpipe/model.hpp"

namespace coldpipe {

/// One slice of a LoRA adapter, aligned with a base-model segment.
struct AdapterPart {
  std::string adapter_id;
  int segment_id = 0;

  friend auto operator<=>(const AdapterPart&, const AdapterPart&) = default;
  friend bool operator==(const AdapterPart&, const AdapterPart&) = default;
};

/// Loading state of one GPU.
struct GpuState {
  int gpu_id = 0;
  std::set<int> loaded_segments;
  std::set<AdapterPart> loaded_adapter_parts;
  Bytes hbm_used = 0;
  bool alive = true;

  bool holds_segment(int segment_id) const { return loaded_segments.count(segment_id) != 0; }
  bool holds_part(const std::string& adapter, int segment_id) const {
    return loaded_adapter_parts.count(AdapterPart{adapter, segment_id}) != 0;
  }
};

/// Model, adapters and the current segmentation, with byte lookups.
struct ModelLayout {
  ModelSpec model;
  std::vector<AdapterSpec> adapters;
  std::vector<Segment> segments;

  ModelLayout() = default;
  ModelLayout(ModelSpec m, std::vector<AdapterSpec> a, int parts)
      : model(std::move(m)), adapters(std::move(a)), segments(partition_model(model, parts)) {}

  int segment_count() const { return static_cast<int>(segments.size()); }

  const AdapterSpec* find_adapter(const std::string& id) const {
    for (const auto& a : adapters)
      if (a.adapter_id == id) return &a;
    return nullptr;
  }

  Bytes segment_bytes(int segment_id) const { return segments.at(static_cast<std::size_t>(segment_id)).bytes; }

  Bytes part_bytes(const AdapterPart& part) const {
    const AdapterSpec* a = find_adapter(part.adapter_id);
    if (a == nullptr) return 0;
    return a->range_bytes(model, segments.at(static_cast<std::size_t>(part.segment_id)).layers);
  }

  /// Adapter bytes covering a layer range; zero for the base model.
  Bytes adapter_bytes_in(const std::string& adapter_id, LayerRange r) const {
    const AdapterSpec* a = find_adapter(adapter_id);
    return a == nullptr ? 0 : a->range_bytes(model, r);
  }

  /// Segment ids whose layers fall inside `r`. `r` must be segment aligned.
  std::vector<int> segments_in(LayerRange r) const {
    std::vector<int> ids;
    for (const auto& s : segments)
      if (r.contains(s.layers)) ids.push_back(s.segment_id);
    return ids;
  }
};

struct ChainStage {
  int gpu_id = 0;
  LayerRange layers;
  friend bool operator==(const ChainStage&, const ChainStage&) = default;
};

/// Ordered (GPU, layer range) stages covering every layer exactly once.
struct PipelineChain {
  std::vector<ChainStage> stages;

  std::size_t size() const { return stages.size(); }
  bool empty() const { return stages.empty(); }

  bool includes_gpu(int gpu) const {
    return std::any_of(stages.begin(), stages.end(), [&](const ChainStage& s) { return s.gpu_id == gpu; });
  }

  /// Contiguous, in order, starting at 0 and ending at layer_count.
  bool covers(int layer_count) const {
    int cursor = 0;
    for (const auto& s : stages) {
      if (s.layers.start != cursor || s.layers.empty()) return false;
      cursor = s.layers.end;
    }
    return !stages.empty() && cursor == layer_count;
  }

  friend bool operator==(const PipelineChain&, const PipelineChain&) = default;
};

/// Longest contiguous run of loaded segments on `state` starting at segment
/// index `first`; returns the exclusive end index.
inline int loaded_run_end(const GpuState& state, int first, int segment_count) {
  int end = first;
  while (end < segment_count && state.holds_segment(end)) ++end;
  return end;
}

/// Greedy chain discovery. From layer 0, repeatedly take the alive GPU with
/// the longest loaded run starting at the cursor (ties to the lowest id).
/// Returns nothing when the loaded layers do not cover the model.
inline std::optional<PipelineChain> find_pipeline_chain(const std::vector<GpuState>& states,
                                                        const ModelLayout& layout) {
  const int n = layout.segment_count();
  PipelineChain chain;
  int cursor = 0;
  while (cursor < n) {
    int best_gpu = -1;
    int best_end = cursor;
    for (const auto& st : states) {
      if (!st.alive) continue;
      const int end = loaded_run_end(st, cursor, n);
      if (end > best_end || (end == best_end && end > cursor && st.gpu_id < best_gpu)) {
        best_end = end;
        best_gpu = st.gpu_id;
      }
    }
    if (best_gpu < 0) return std::nullopt;
    chain.stages.push_back(ChainStage{
        best_gpu, LayerRange{layout.segments[static_cast<std::size_t>(cursor)].layers.start,
                             layout.segments[static_cast<std::size_t>(best_end - 1)].layers.end}});
    cursor = best_end;
  }
  if (chain.empty()) return std::nullopt;
  return chain;
}

/// True when every stage GPU holds the adapter slices for its layers.
inline bool chain_supports_adapter(const PipelineChain& chain, const std::vector<GpuState>& states,
                                   const ModelLayout& layout, const std::string& adapter_id) {
  if (adapter_id.empty()) return true;
  for (const auto& stage : chain.stages) {
    const auto& st = states.at(static_cast<std::size_t>(stage.gpu_id));
    for (int seg : layout.segments_in(stage.layers))
      if (!st.holds_part(adapter_id, seg)) return false;
  }
  return true;
}

/// Parts an adapter still needs on each stage GPU before the chain can run it.
inline std::vector<std::pair<int, AdapterPart>> missing_adapter_parts(const PipelineChain& chain,
                                                                      const std::vector<GpuState>& states,
                                                                      const ModelLayout& layout,
                                                                      const std::string& adapter_id) {
  std::vector<std::pair<int, AdapterPart>> missing;
  if (adapter_id.empty()) return missing;
  for (const auto& stage : chain.stages) {
    const auto& st = states.at(static_cast<std::size_t>(stage.gpu_id));
    for (int seg : layout.segments_in(stage.layers))
      if (!st.holds_part(adapter_id, seg)) missing.emplace_back(stage.gpu_id, AdapterPart{adapter_id, seg});
  }
  return missing;
}

/// Holds every segment of the model.
inline bool holds_full_model(const GpuState& st, const ModelLayout& layout) {
  return static_cast<int>(st.loaded_segments.size()) == layout.segment_count();
}

}  // namespace coldpipe
