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

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "coldpipe/common.hpp"

namespace coldpipe {

using RequestId = std::int64_t;
using BatchId = std::int64_t;

enum class RequestStage { Queued, Prefill, Decode, Done, AwaitingReconstruction, Rejected };

inline const char* to_string(RequestStage s) {
  switch (s) {
    case RequestStage::Queued: return "queued";
    case RequestStage::Prefill: return "prefill";
    case RequestStage::Decode: return "decode";
    case RequestStage::Done: return "done";
    case RequestStage::AwaitingReconstruction: return "awaiting_reconstruction";
    case RequestStage::Rejected: return "rejected";
  }
  return "?";
}

enum class ExecutionMode { PipelineParallel, SingleGpu };

inline const char* to_string(ExecutionMode m) {
  return m == ExecutionMode::PipelineParallel ? "pipeline" : "single_gpu";
}

struct Request {
  RequestId request_id = 0;
  Nanos arrival_time = 0;
  std::int64_t prompt_tokens = 1;
  std::int64_t max_new_tokens = 1;
  std::string adapter_id;  // empty: base model
  RequestStage stage = RequestStage::Queued;
  // Tokens produced by decode steps. The prefill emits the first token.
  std::int64_t generated = 0;
  std::optional<Nanos> ttft;
  std::optional<Nanos> completion_time;
  ExecutionMode mode = ExecutionMode::PipelineParallel;

  // TTFT decomposition; the three parts sum to *ttft.
  Nanos ready_wait = 0;
  Nanos queueing = 0;
  Nanos prefill_path = 0;

  // Tokens fed to a KV rebuild: prompt and everything emitted so far.
  std::int64_t merged_input_tokens() const { return prompt_tokens + generated; }
};

enum class BatchPhase { Prefill, Decode, Reconstruct };

inline const char* to_string(BatchPhase p) {
  switch (p) {
    case BatchPhase::Prefill: return "prefill";
    case BatchPhase::Decode: return "decode";
    case BatchPhase::Reconstruct: return "reconstruct";
  }
  return "?";
}

struct Batch {
  BatchId batch_id = 0;
  std::vector<RequestId> request_ids;
  std::string adapter_id;
  BatchPhase phase = BatchPhase::Prefill;
};

/// Which GPU holds the KV cache of each (request, layer). A layer has at
/// most one entry: the cache lives where that layer last ran.
class KvLedger {
 public:
  using Entry = std::tuple<RequestId, int, int>;  // request, layer, gpu

  explicit KvLedger(int layer_count = 0) : layer_count_(layer_count) {}

  int layer_count() const { return layer_count_; }

  void write(RequestId request, int first_layer, int end_layer, int gpu) {
    auto& row = row_for(request);
    for (int l = first_layer; l < end_layer; ++l) row[static_cast<std::size_t>(l)] = gpu;
  }

  std::optional<int> gpu_at(RequestId request, int layer) const {
    const auto* row = find_row(request);
    if (row == nullptr) return std::nullopt;
    const int g = (*row)[static_cast<std::size_t>(layer)];
    if (g < 0) return std::nullopt;
    return g;
  }

  bool has(RequestId request, int layer, int gpu) const {
    auto g = gpu_at(request, layer);
    return g && *g == gpu;
  }

  /// Layers in [first, end) whose entry lives on `gpu`.
  int count_on(RequestId request, int first_layer, int end_layer, int gpu) const {
    const auto* row = find_row(request);
    if (row == nullptr) return 0;
    int n = 0;
    for (int l = first_layer; l < end_layer; ++l)
      if ((*row)[static_cast<std::size_t>(l)] == gpu) ++n;
    return n;
  }

  /// Removes every entry held by `gpu`; returns the requests that lost any.
  std::vector<RequestId> erase_gpu(int gpu) {
    std::vector<RequestId> affected;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      bool hit = false;
      for (int& g : rows_[i]) {
        if (g == gpu) {
          g = -1;
          hit = true;
        }
      }
      if (hit) affected.push_back(static_cast<RequestId>(i));
    }
    return affected;
  }

  void erase_request(RequestId request) {
    if (auto* row = find_row(request)) std::fill(row->begin(), row->end(), -1);
  }

  void clear() { rows_.clear(); }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& row : rows_)
      for (int g : row)
        if (g >= 0) ++n;
    return n;
  }

  std::set<Entry> entries() const {
    std::set<Entry> out;
    for (std::size_t i = 0; i < rows_.size(); ++i)
      for (int l = 0; l < layer_count_; ++l)
        if (rows_[i][static_cast<std::size_t>(l)] >= 0)
          out.emplace(static_cast<RequestId>(i), l, rows_[i][static_cast<std::size_t>(l)]);
    return out;
  }

 private:
  std::vector<int>& row_for(RequestId request) {
    const auto idx = static_cast<std::size_t>(request);
    if (idx >= rows_.size()) rows_.resize(idx + 1);
    auto& row = rows_[idx];
    if (row.empty()) row.assign(static_cast<std::size_t>(layer_count_), -1);
    return row;
  }

  const std::vector<int>* find_row(RequestId request) const {
    const auto idx = static_cast<std::size_t>(request);
    if (request < 0 || idx >= rows_.size() || rows_[idx].empty()) return nullptr;
    return &rows_[idx];
  }
  std::vector<int>* find_row(RequestId request) {
    const auto idx = static_cast<std::size_t>(request);
    if (request < 0 || idx >= rows_.size() || rows_[idx].empty()) return nullptr;
    return &rows_[idx];
  }

  int layer_count_;
  std::vector<std::vector<int>> rows_;  // indexed by request id
};

}  // namespace coldpipe
