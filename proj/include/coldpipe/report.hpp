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

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coldpipe/config.hpp"
#include "coldpipe/metrics.hpp"
#include "coldpipe/simulator.hpp"

namespace coldpipe {

struct RunSummary {
  Stats ttft;
  Stats latency;
  std::vector<double> recovery_times;
  std::optional<double> halt_gap;
  StartupBreakdown breakdown;
  std::int64_t tokens = 0;
  std::int64_t completed = 0;
  std::int64_t rejected = 0;
};

inline RunSummary summarize_run(const SimulationResult& r) {
  RunSummary s;
  s.ttft = compute_ttft_stats(r.trace);
  s.latency = latency_stats(r.trace);
  s.breakdown = startup_breakdown(r.trace);
  s.tokens = total_tokens(r.trace);
  for (const auto& q : r.requests) {
    if (q.stage == RequestStage::Done) ++s.completed;
    if (q.stage == RequestStage::Rejected) ++s.rejected;
  }
  if (r.trace.first(TraceKind::Crash)) {
    const auto def = r.scenario.recovery.resume_metric == ResumeMetric::NextToken ? ResumeDefinition::NextToken
                                                                                 : ResumeDefinition::NextSegment;
    s.recovery_times = measure_recovery_times(r.trace, def);
    try {
      s.halt_gap = halt_gap(r.trace);
    } catch (const QueryError&) {
    }
  }
  return s;
}

inline std::optional<double> median_recovery(const RunSummary& s) {
  if (s.recovery_times.empty()) return std::nullopt;
  auto v = s.recovery_times;
  std::sort(v.begin(), v.end());
  return percentile(v, 0.5);
}

namespace detail {

inline std::string fmt(double v, int precision = 9) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

inline json stats_json(const Stats& s) {
  if (s.empty()) return json{{"count", 0}};
  return json{{"count", s.count}, {"mean", s.mean}, {"variance", s.variance}, {"min", s.min},
              {"p50", s.p50},     {"p90", s.p90},   {"p99", s.p99},           {"max", s.max}};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace detail

inline std::string requests_csv(const SimulationResult& r) {
  std::ostringstream os;
  os << "request_id,arrival,ttft,completion,adapter,mode\n";
  for (const auto& q : r.requests) {
    os << q.request_id << ',' << detail::fmt(to_seconds(q.arrival_time)) << ','
       << (q.ttft ? detail::fmt(to_seconds(*q.ttft)) : "") << ','
       << (q.completion_time ? detail::fmt(to_seconds(*q.completion_time)) : "") << ',' << q.adapter_id << ','
       << (q.stage == RequestStage::Rejected ? "rejected" : to_string(q.mode)) << '\n';
  }
  return os.str();
}

inline std::string throughput_csv(const SimulationResult& r, double bin_seconds) {
  std::ostringstream os;
  os << "bin_start,tokens_per_s\n";
  for (const auto& p : throughput_timeline(r.trace, bin_seconds))
    os << detail::fmt(p.bin_start) << ',' << detail::fmt(p.tokens_per_second, 3) << '\n';
  return os.str();
}

inline json breakdown_json(const StartupBreakdown& b) {
  return json{{"load_ckpt_dram", b.load_ckpt_dram},
              {"load_lora_ckpt_dram", b.load_lora_ckpt_dram},
              {"init_meta", b.init_meta},
              {"load_params_gpu", b.load_params_gpu},
              {"load_lora_params_gpu", b.load_lora_params_gpu},
              {"prefill", b.prefill},
              {"total", b.total},
              {"loading_fraction", b.loading_fraction()},
              {"lora_fraction", b.lora_fraction()}};
}

inline json summary_json(const SimulationResult& r, const RunSummary& s) {
  json rec = json::array();
  for (double t : s.recovery_times) rec.push_back(t);
  json out{{"scenario_hash", std::to_string(scenario_hash(r.scenario))},
           {"trace_hash", std::to_string(r.trace_hash())},
           {"seed", r.scenario.workload.seed},
           {"strategy", to_string(r.scenario.loading.strategy)},
           {"requests", r.requests.size()},
           {"completed", s.completed},
           {"rejected", s.rejected},
           {"tokens", s.tokens},
           {"end_time", to_seconds(r.end_time)},
           {"unrecoverable", r.unrecoverable},
           {"truncated", r.truncated},
           {"ttft", detail::stats_json(s.ttft)},
           {"latency", detail::stats_json(s.latency)},
           {"recovery_times", rec}};
  out["ready_time"] = r.ready_time ? json(to_seconds(*r.ready_time)) : json(nullptr);
  out["switch_time"] = r.switch_time ? json(to_seconds(*r.switch_time)) : json(nullptr);
  out["halt_gap"] = s.halt_gap ? json(*s.halt_gap) : json(nullptr);
  out["config"] = scenario_to_json(r.scenario);
  return out;
}

inline constexpr double kDefaultThroughputBin = 0.1;

/// Writes requests.csv, throughput.csv, breakdown.json and summary.json.
inline void write_outputs(const std::filesystem::path& dir, const SimulationResult& r, const RunSummary& s,
                          double bin_seconds = kDefaultThroughputBin) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "requests.csv", requests_csv(r));
  detail::write_file(dir / "throughput.csv", throughput_csv(r, bin_seconds));
  detail::write_file(dir / "breakdown.json", breakdown_json(s.breakdown).dump(2) + "\n");
  detail::write_file(dir / "summary.json", summary_json(r, s).dump(2) + "\n");
}

/// One-line human summary.
inline std::string summary_line(const SimulationResult& r, const RunSummary& s) {
  std::ostringstream os;
  os << r.scenario.name << ": " << to_string(r.scenario.loading.strategy) << " seed " << r.scenario.workload.seed
     << ", " << s.completed << "/" << r.requests.size() << " done, mean TTFT ";
  os << (s.ttft.empty() ? std::string("n/a") : detail::fmt(s.ttft.mean, 3) + " s");
  os << ", mean latency " << (s.latency.empty() ? std::string("n/a") : detail::fmt(s.latency.mean, 3) + " s");
  if (auto m = median_recovery(s)) os << ", p50 recovery " << detail::fmt(*m, 3) << " s";
  if (r.unrecoverable) os << ", UNRECOVERABLE";
  return os.str();
}

/// Text dump of the loading plan and, when GPUs fail, of the reassignment
/// computed with each survivor holding its first `loaded` planned segments.
inline std::string format_plan(const Scenario& sc, const std::vector<int>& failed = {}, int loaded = 1) {
  const int n = sc.cluster.gpu_count;
  const ModelLayout layout(sc.model, sc.adapters, n);
  const LoadPlan plan = plan_loading(sc.loading.strategy, layout, n);
  std::ostringstream os;
  os << "strategy " << to_string(plan.strategy) << ", " << n << " GPUs, " << layout.segments.size() << " segments\n";
  for (const auto& seg : layout.segments)
    os << "segment " << seg.segment_id << ": layers [" << seg.layers.start << ", " << seg.layers.end << ") "
       << seg.bytes << " bytes\n";
  auto list = [](const std::vector<int>& v) {
    std::string out;
    for (int x : v) out += (out.empty() ? "" : " ") + std::to_string(x);
    return out;
  };
  for (int g = 0; g < n; ++g) {
    const auto gi = static_cast<std::size_t>(g);
    os << "gpu " << g << ": order " << list(plan.orders[gi]);
    if (!plan.blocks[gi].empty()) os << " | block " << list(plan.blocks[gi]);
    if (plan.owned_adapter[gi]) os << " | owns " << *plan.owned_adapter[gi];
    os << "\n";
  }
  if (failed.empty()) return os.str();

  std::vector<GpuState> survivors;
  std::string failed_list;
  for (int g = 0; g < n; ++g) {
    if (std::find(failed.begin(), failed.end(), g) != failed.end()) {
      failed_list += (failed_list.empty() ? "" : ",") + std::to_string(g);
      continue;
    }
    GpuState st;
    st.gpu_id = g;
    const auto& order = plan.orders[static_cast<std::size_t>(g)];
    for (int i = 0; i < std::min<int>(loaded, static_cast<int>(order.size())); ++i)
      st.loaded_segments.insert(order[static_cast<std::size_t>(i)]);
    survivors.push_back(st);
  }
  os << "fail gpus " << failed_list << " with " << loaded << " segment(s) loaded per GPU\n";
  if (survivors.empty()) {
    os << "unrecoverable: no surviving GPU\n";
    return os.str();
  }
  if (auto chain = find_pipeline_chain(survivors, layout)) {
    os << "chain:";
    for (const auto& st : chain->stages)
      os << " gpu " << st.gpu_id << " [" << st.layers.start << ", " << st.layers.end << ")";
    os << "\n";
    return os.str();
  }
  const auto re = reassign_layers(survivors, layout);
  for (const auto& [g, block] : re.target_blocks) {
    const auto& layers = re.target_layers.at(g);
    os << "gpu " << g << ": block " << block.first << "-" << block.last - 1 << " layers [" << layers.start << ", "
       << layers.end << ") | order " << list(re.new_orders.at(g)) << "\n";
  }
  return os.str();
}

}  // namespace coldpipe
