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

#include <set>
#include <string>
#include <vector>

#include "coldpipe/cluster.hpp"
#include "coldpipe/lora.hpp"
#include "coldpipe/model.hpp"
#include "coldpipe/plan.hpp"
#include "coldpipe/recovery.hpp"
#include "coldpipe/request.hpp"
#include "coldpipe/workload.hpp"

namespace coldpipe {

struct LoadingConfig {
  LoadStrategy strategy = LoadStrategy::PipelineParallel;
  // Instance metadata initialization, charged once before parameter loading.
  double init_meta = 0.2;
  // Start with every GPU holding the full model and all adapters.
  bool warm_start = false;
};

struct InferenceConfig {
  int max_batch_size = 64;
  // Only used with warm_start: mode the server starts in.
  ExecutionMode initial_mode = ExecutionMode::PipelineParallel;
};

struct LoraConfig {
  LoraMode mode = LoraMode::Merged;
  LoraScheduling scheduling = LoraScheduling::Epoch;
  EpochConfig epoch;
  // Extra compute of unmerged adapters, as a fraction of base compute.
  double unmerged_overhead = 0.38;
};

struct SwitchConfig {
  bool enabled = true;
  std::string target = "single_gpu";
};

struct FaultConfig {
  std::vector<CrashEvent> events;
  double poisson_rate = 0.0;  // crashes/second over workload.duration
};

enum class ResumeMetric { NextToken, NextSegment };

struct RecoveryConfig {
  RecoveryMode mode = RecoveryMode::PipelineParallel;
  double detection_latency = 0.0;
  ResumeMetric resume_metric = ResumeMetric::NextToken;
  // A full restart re-reads the checkpoint from its storage location.
  bool full_restart_reloads_checkpoint = true;
};

struct Scenario {
  std::string name = "scenario";
  ClusterSpec cluster;
  ComputeCoefficients compute;
  ModelSpec model;
  std::vector<AdapterSpec> adapters;
  LoadingConfig loading;
  InferenceConfig inference;
  LoraConfig lora;
  SwitchConfig switching;
  FaultConfig faults;
  RecoveryConfig recovery;
  WorkloadSpec workload;
  // Safety cap on simulated time.
  double max_sim_time = 3600.0;
  std::string output_dir;

  std::vector<std::string> adapter_ids() const {
    std::vector<std::string> ids;
    for (const auto& a : adapters) ids.push_back(a.adapter_id);
    return ids;
  }

  /// Cross-field validation; returns every problem found.
  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    auto append = [&](std::vector<std::string> more) {
      errors.insert(errors.end(), more.begin(), more.end());
    };
    append(cluster.validate());
    append(compute.validate());
    append(model.validate());
    append(workload.validate());
    if (cluster.gpu_count >= 1 && model.layer_count >= 1 && cluster.gpu_count > model.layer_count)
      errors.emplace_back("model.layer_count (" + std::to_string(model.layer_count) + ") must be >= cluster.gpu_count (" +
                          std::to_string(cluster.gpu_count) + ")");
    std::set<std::string> ids;
    Bytes adapter_total = 0;
    for (std::size_t i = 0; i < adapters.size(); ++i) {
      const auto& a = adapters[i];
      const std::string where = "adapters[" + std::to_string(i) + "]";
      if (a.adapter_id.empty()) errors.push_back(where + ".adapter_id must not be empty");
      if (!ids.insert(a.adapter_id).second) errors.push_back(where + ".adapter_id '" + a.adapter_id + "' is duplicated");
      if (a.base_model_id != model.model_id)
        errors.push_back(where + ".base_model_id '" + a.base_model_id + "' does not match model '" + model.model_id + "'");
      if (!(a.size_fraction > 0.0 && a.size_fraction < 1.0)) errors.push_back(where + ".size_fraction must be in (0, 1)");
      else adapter_total += a.total_bytes(model);
    }
    if (model.layer_count >= 1 && model.total_bytes() + adapter_total > cluster.hbm_capacity)
      errors.emplace_back("model plus adapters (" + std::to_string(model.total_bytes() + adapter_total) +
                          " bytes) exceed cluster.hbm_capacity");
    if (!(loading.init_meta >= 0.0)) errors.emplace_back("loading.init_meta must be >= 0");
    if (inference.max_batch_size < 1) errors.emplace_back("inference.max_batch_size must be >= 1");
    if (!(lora.epoch.epoch_length > 0.0)) errors.emplace_back("lora.epoch_length must be > 0");
    if (lora.epoch.starvation_epochs < 1) errors.emplace_back("lora.starvation_epochs must be >= 1");
    if (!(lora.unmerged_overhead >= 0.0)) errors.emplace_back("lora.unmerged_overhead must be >= 0");
    if (switching.target != "single_gpu")
      errors.emplace_back("switch.target '" + switching.target + "' is not supported (only single_gpu)");
    for (std::size_t i = 0; i < faults.events.size(); ++i) {
      const auto& f = faults.events[i];
      const std::string where = "faults[" + std::to_string(i) + "]";
      if (f.gpu_id < 0 || f.gpu_id >= cluster.gpu_count)
        errors.push_back(where + ".gpu " + std::to_string(f.gpu_id) + " does not exist (gpu_count " +
                         std::to_string(cluster.gpu_count) + ")");
      if (!(f.time >= 0.0)) errors.push_back(where + ".time must be >= 0");
    }
    if (!(faults.poisson_rate >= 0.0)) errors.emplace_back("faults.poisson_rate must be >= 0");
    if (!(recovery.detection_latency >= 0.0)) errors.emplace_back("recovery.detection_latency must be >= 0");
    if (!(max_sim_time > 0.0)) errors.emplace_back("max_sim_time must be > 0");
    return errors;
  }
};

/// Two GPUs cold-starting a 7B model from SSD with two adapters.
inline Scenario default_scenario() {
  Scenario s;
  s.name = "default";
  s.model = *catalog_model("mistral-7b");
  s.model.checkpoint_location = CheckpointLocation::Ssd;
  for (const char* id : {"lora-a", "lora-b"}) s.adapters.push_back(AdapterSpec{id, s.model.model_id, 0.002});
  return s;
}

}  // namespace coldpipe
