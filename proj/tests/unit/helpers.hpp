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

#include <string>
#include <vector>

#include "coldpipe/coldpipe.hpp"

namespace coldpipe::testing {

/// Uniform model: `layers` layers of `layer_bytes`, no embeddings.
inline ModelSpec uniform_model(int layers, Bytes layer_bytes, const std::string& id = "m") {
  ModelSpec m;
  m.model_id = id;
  m.layer_count = layers;
  m.bytes_per_layer = layer_bytes;
  m.extra_bytes = 0;
  m.checkpoint_location = CheckpointLocation::Dram;
  return m;
}

inline GpuState gpu_with(int id, std::initializer_list<int> segments) {
  GpuState st;
  st.gpu_id = id;
  st.loaded_segments = segments;
  return st;
}

/// Small, fast scenario: `gpus` GPUs, 1 GB per GPU-sized segment, DRAM
/// checkpoint, no init delay, no adapters.
inline Scenario small_scenario(int gpus, int layers = 8) {
  Scenario s;
  s.name = "small";
  s.cluster.gpu_count = gpus;
  s.cluster.pcie_bandwidth = 10e9;
  s.cluster.convert_rate = 5e9;
  s.model = uniform_model(layers, 250 * MB);
  s.loading.init_meta = 0.0;
  s.workload.arrival = ArrivalKind::Burst;
  s.workload.count = 4;
  s.workload.prompt = LengthDistribution::constant(16);
  s.workload.max_new_tokens = LengthDistribution::constant(5);
  return s;
}

inline Request make_request(RequestId id, Nanos arrival, std::int64_t prompt, std::int64_t max_new,
                            const std::string& adapter = "") {
  Request r;
  r.request_id = id;
  r.arrival_time = arrival;
  r.prompt_tokens = prompt;
  r.max_new_tokens = max_new;
  r.adapter_id = adapter;
  return r;
}

}  // namespace coldpipe::testing
