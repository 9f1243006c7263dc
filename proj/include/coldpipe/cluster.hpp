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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "coldpipe/common.hpp"

namespace coldpipe {

/// Hardware topology of one GPU server. Bandwidths in bytes/second.
struct ClusterSpec {
  int gpu_count = 2;
  Bytes hbm_capacity = 40 * GB;
  double pcie_bandwidth = 24e9;            // per CPU<->GPU link
  double interconnect_bandwidth = 24e9;    // per GPU-pair hop
  double interconnect_base_latency = 20e-6;
  double dram_bandwidth = 200e9;           // aggregate
  double ssd_bandwidth = 13e9;
  double convert_rate = 4.2e9;             // checkpoint -> parameters, on GPU
  double cpu_convert_rate = 1.5e9;         // same, host-side

  /// Returns a list of violated invariants; empty when valid.
  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (gpu_count < 1) errors.emplace_back("cluster.gpu_count must be >= 1");
    if (hbm_capacity <= 0) errors.emplace_back("cluster.hbm_capacity must be > 0");
    auto positive = [&](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) errors.emplace_back(std::string("cluster.") + name + " must be > 0");
    };
    positive(pcie_bandwidth, "pcie_bandwidth");
    positive(interconnect_bandwidth, "interconnect_bandwidth");
    positive(dram_bandwidth, "dram_bandwidth");
    positive(ssd_bandwidth, "ssd_bandwidth");
    positive(convert_rate, "convert_rate");
    positive(cpu_convert_rate, "cpu_convert_rate");
    if (!(interconnect_base_latency >= 0.0))
      errors.emplace_back("cluster.interconnect_base_latency must be >= 0");
    return errors;
  }
};

/// Calibration knobs for the analytic compute model.
struct ComputeCoefficients {
  double prefill_per_layer_token = 2e-6;
  double decode_per_layer = 30e-6;
  double q_recompute_factor = 1.0 / 3.0;
  Bytes hidden_state_bytes_per_token = 8 * KiB;
  double merge_rate = 1e9;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (!(prefill_per_layer_token > 0.0)) errors.emplace_back("compute.prefill_per_layer_token must be > 0");
    if (!(decode_per_layer > 0.0)) errors.emplace_back("compute.decode_per_layer must be > 0");
    if (!(q_recompute_factor > 0.0 && q_recompute_factor < 1.0))
      errors.emplace_back("compute.q_recompute_factor must be in (0, 1)");
    if (hidden_state_bytes_per_token <= 0) errors.emplace_back("compute.hidden_state_bytes_per_token must be > 0");
    if (!(merge_rate > 0.0)) errors.emplace_back("compute.merge_rate must be > 0");
    return errors;
  }
};

/// Affine channel model: base_latency + bytes / bandwidth, in seconds.
inline double transfer_time(Bytes bytes, double bandwidth, double base_latency = 0.0) {
  if (!(bandwidth > 0.0)) throw ConfigError("transfer_time: bandwidth must be positive");
  if (bytes < 0) throw DomainError("transfer_time: negative byte count");
  if (base_latency < 0.0) throw DomainError("transfer_time: negative base latency");
  return base_latency + static_cast<double>(bytes) / bandwidth;
}

/// Same model in integer nanoseconds. The payload term is rounded up so that
/// bytes moved never exceed bandwidth x elapsed time.
inline Nanos transfer_nanos(Bytes bytes, double bandwidth, double base_latency = 0.0) {
  if (!(bandwidth > 0.0)) throw ConfigError("transfer_time: bandwidth must be positive");
  if (bytes < 0) throw DomainError("transfer_time: negative byte count");
  const long double payload = static_cast<long double>(bytes) * 1e9L / static_cast<long double>(bandwidth);
  return to_nanos(base_latency) + static_cast<Nanos>(std::ceil(payload - 1e-6L));
}

inline double prefill_time(std::int64_t layers, std::int64_t tokens, std::int64_t batch,
                           const ComputeCoefficients& c) {
  if (layers < 1) throw DomainError("prefill_time: a pipeline stage needs at least one layer");
  if (tokens < 1 || batch < 1) throw DomainError("prefill_time: token and batch counts must be >= 1");
  return static_cast<double>(layers) * static_cast<double>(tokens) * static_cast<double>(batch) *
         c.prefill_per_layer_token;
}

inline double decode_step_time(std::int64_t layers, std::int64_t batch, const ComputeCoefficients& c) {
  if (layers < 1) throw DomainError("decode_step_time: a pipeline stage needs at least one layer");
  if (batch < 1) throw DomainError("decode_step_time: batch must be >= 1");
  return static_cast<double>(layers) * static_cast<double>(batch) * c.decode_per_layer;
}

/// Prefill over layers that keep their KV cache: only Q is recomputed.
inline double q_recompute_time(std::int64_t layers, std::int64_t tokens, std::int64_t batch,
                               const ComputeCoefficients& c) {
  return prefill_time(layers, tokens, batch, c) * c.q_recompute_factor;
}

/// Unmerge the old adapter and merge the new one into the base weights.
inline double merge_time(Bytes old_adapter_bytes, Bytes new_adapter_bytes, double merge_rate) {
  if (!(merge_rate > 0.0)) throw ConfigError("merge_time: merge_rate must be positive");
  return static_cast<double>(old_adapter_bytes + new_adapter_bytes) / merge_rate;
}

}  // namespace coldpipe
