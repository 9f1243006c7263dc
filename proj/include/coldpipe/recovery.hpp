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
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "coldpipe/chain.hpp"
#include "coldpipe/cluster.hpp"
#include "coldpipe/common.hpp"
#include "coldpipe/plan.hpp"

namespace coldpipe {

class UnrecoverableServer : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FaultPhase { Loading, Inference, Any };
enum class RecoveryMode { PipelineParallel, Full };

struct CrashEvent {
  double time = 0.0;
  int gpu_id = 0;
  FaultPhase phase_hint = FaultPhase::Any;
};

/// Contiguous segment block [first, last) assigned to one survivor.
struct SegmentBlock {
  int first = 0;
  int last = 0;
  int size() const { return last - first; }
  bool contains(int seg) const { return seg >= first && seg < last; }
  friend bool operator==(const SegmentBlock&, const SegmentBlock&) = default;
};

struct ReassignmentPlan {
  std::map<int, SegmentBlock> target_blocks;
  std::map<int, LayerRange> target_layers;
  std::map<int, std::vector<int>> new_orders;
};

/// Splits `segment_count` segments into `parts` contiguous blocks whose sizes
/// differ by at most one; lower blocks take the remainder.
inline std::vector<SegmentBlock> balanced_blocks(int segment_count, int parts) {
  std::vector<SegmentBlock> blocks;
  const int base = segment_count / parts;
  const int rem = segment_count % parts;
  int start = 0;
  for (int i = 0; i < parts; ++i) {
    const int size = base + (i < rem ? 1 : 0);
    blocks.push_back(SegmentBlock{start, start + size});
    start += size;
  }
  return blocks;
}

inline int block_overlap(const GpuState& st, const SegmentBlock& b) {
  int n = 0;
  for (int seg : st.loaded_segments)
    if (b.contains(seg)) ++n;
  return n;
}

/// Exhaustive search up to this many survivors, greedy beyond.
inline constexpr int kExhaustiveAssignmentLimit = 8;

/// Survivor i (sorted by id) gets blocks[assignment[i]]. Maximizes the number
/// of already-loaded segments that fall inside each survivor's block; among
/// equal totals, the lexicographically smallest assignment wins, which hands
/// lower blocks to lower GPU ids.
inline std::vector<int> assign_blocks(const std::vector<GpuState>& survivors, const std::vector<SegmentBlock>& blocks) {
  const int m = static_cast<int>(survivors.size());
  std::vector<int> best(static_cast<std::size_t>(m));
  std::iota(best.begin(), best.end(), 0);
  if (m <= kExhaustiveAssignmentLimit) {
    std::vector<int> perm = best;
    int best_score = -1;
    do {
      int score = 0;
      for (int i = 0; i < m; ++i)
        score += block_overlap(survivors[static_cast<std::size_t>(i)], blocks[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
      if (score > best_score) {
        best_score = score;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  std::vector<bool> taken(static_cast<std::size_t>(m), false);
  for (int b = 0; b < m; ++b) {
    int pick = -1;
    int pick_score = -1;
    for (int i = 0; i < m; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const int s = block_overlap(survivors[static_cast<std::size_t>(i)], blocks[static_cast<std::size_t>(b)]);
      if (s > pick_score) {
        pick_score = s;
        pick = i;
      }
    }
    taken[static_cast<std::size_t>(pick)] = true;
    best[static_cast<std::size_t>(pick)] = b;
  }
  return best;
}

/// Rebalances loading across survivors after a crash. Each survivor gets a
/// contiguous, balanced block of segments. Its new order lists the block
/// ascending, then the remaining segments cyclically from the block's end.
/// Loaded segments stay in place; next_transfer skips them.
inline ReassignmentPlan reassign_layers(std::vector<GpuState> survivors, const ModelLayout& layout) {
  survivors.erase(std::remove_if(survivors.begin(), survivors.end(), [](const GpuState& s) { return !s.alive; }),
                  survivors.end());
  if (survivors.empty()) throw UnrecoverableServer("reassign_layers: no surviving GPU");
  std::sort(survivors.begin(), survivors.end(), [](const GpuState& a, const GpuState& b) { return a.gpu_id < b.gpu_id; });
  const int n = layout.segment_count();
  const int m = std::min<int>(static_cast<int>(survivors.size()), n);
  // More survivors than segments: the extra GPUs get no block.
  std::vector<GpuState> ranked(survivors.begin(), survivors.begin() + m);
  if (static_cast<int>(survivors.size()) > n) {
    std::stable_sort(survivors.begin(), survivors.end(), [](const GpuState& a, const GpuState& b) {
      return a.loaded_segments.size() > b.loaded_segments.size();
    });
    ranked.assign(survivors.begin(), survivors.begin() + m);
    std::sort(ranked.begin(), ranked.end(), [](const GpuState& a, const GpuState& b) { return a.gpu_id < b.gpu_id; });
  }
  const auto blocks = balanced_blocks(n, m);
  const auto assignment = assign_blocks(ranked, blocks);

  ReassignmentPlan plan;
  for (int i = 0; i < m; ++i) {
    const auto& st = ranked[static_cast<std::size_t>(i)];
    const SegmentBlock b = blocks[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
    plan.target_blocks[st.gpu_id] = b;
    plan.target_layers[st.gpu_id] = LayerRange{layout.segments[static_cast<std::size_t>(b.first)].layers.start,
                                               layout.segments[static_cast<std::size_t>(b.last - 1)].layers.end};
    std::vector<int> order;
    for (int s = b.first; s < b.last; ++s) order.push_back(s);
    for (int k = 0; k < n - b.size(); ++k) order.push_back((b.last + k) % n);
    plan.new_orders[st.gpu_id] = std::move(order);
  }
  for (const auto& st : survivors) {
    if (plan.new_orders.count(st.gpu_id)) continue;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    plan.new_orders[st.gpu_id] = std::move(order);
  }
  return plan;
}

/// Applies a reassignment to a pipeline plan in place.
inline void apply_reassignment(LoadPlan& plan, const ReassignmentPlan& re, const ModelLayout& layout) {
  for (const auto& [gpu, order] : re.new_orders) {
    const auto g = static_cast<std::size_t>(gpu);
    plan.orders[g] = order;
    plan.blocks[g].clear();
    plan.adapter_orders[g].clear();
    if (auto it = re.target_blocks.find(gpu); it != re.target_blocks.end()) {
      for (int s = it->second.first; s < it->second.last; ++s) {
        plan.blocks[g].push_back(s);
        for (const auto& a : layout.adapters) plan.adapter_orders[g].push_back(AdapterPart{a.adapter_id, s});
      }
    }
  }
}

/// Compute charged to rebuild one request's KV cache on a stage: layers with
/// surviving entries only recompute Q, the rest run a full prefill.
struct ReconstructionCost {
  double q_recompute_seconds = 0.0;
  double full_prefill_seconds = 0.0;
  int reused_layers = 0;
  int rebuilt_layers = 0;

  double total() const { return q_recompute_seconds + full_prefill_seconds; }
};

inline ReconstructionCost reconstruction_cost(int reused_layers, int rebuilt_layers, std::int64_t merged_tokens,
                                              const ComputeCoefficients& c) {
  ReconstructionCost cost;
  cost.reused_layers = reused_layers;
  cost.rebuilt_layers = rebuilt_layers;
  if (merged_tokens < 1) return cost;
  if (reused_layers > 0) cost.q_recompute_seconds = q_recompute_time(reused_layers, merged_tokens, 1, c);
  if (rebuilt_layers > 0) cost.full_prefill_seconds = prefill_time(rebuilt_layers, merged_tokens, 1, c);
  return cost;
}

}  // namespace coldpipe
