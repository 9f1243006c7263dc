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

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldpipe/common.hpp"
#include "coldpipe/scenario.hpp"

namespace coldpipe {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

/// Splits "12.5GiB" into 12.5 and "GiB". Throws on a missing number.
inline std::pair<double, std::string> split_unit(const std::string& text) {
  const std::string s = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("'" + text + "' is not a number");
  }
  return {v, trim(s.substr(used))};
}

}  // namespace detail

/// "32GiB", "7.2GB", "512" (bytes).
inline Bytes parse_bytes(const std::string& text) {
  auto [v, unit] = detail::split_unit(text);
  static const std::map<std::string, double> scale = {
      {"", 1.0}, {"B", 1.0}, {"KB", 1e3}, {"MB", 1e6}, {"GB", 1e9}, {"TB", 1e12},
      {"KiB", 1024.0}, {"MiB", 1048576.0}, {"GiB", 1073741824.0}, {"TiB", 1099511627776.0}};
  auto it = scale.find(unit);
  if (it == scale.end()) throw ConfigError("unknown byte unit '" + unit + "' in '" + text + "'");
  return static_cast<Bytes>(std::llround(v * it->second));
}

/// "24GB/s", "1.5GiB/s", plain numbers are bytes/second.
inline double parse_rate(const std::string& text) {
  std::string s = detail::trim(text);
  if (s.size() > 2 && s.substr(s.size() - 2) == "/s") s = s.substr(0, s.size() - 2);
  return static_cast<double>(parse_bytes(s));
}

/// "200ms", "20us", "1.5s", "300ns"; plain numbers are seconds.
inline double parse_seconds(const std::string& text) {
  auto [v, unit] = detail::split_unit(text);
  static const std::map<std::string, double> scale = {{"", 1.0}, {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}};
  auto it = scale.find(unit);
  if (it == scale.end()) throw ConfigError("unknown time unit '" + unit + "' in '" + text + "'");
  return v * it->second;
}

namespace detail {

/// Reads one JSON object, remembering which keys were used.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errors) : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) errors_.push_back(where() + " must be a table");
  }

  ~Reader() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) errors_.push_back("unknown key " + key(it.key()));
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  const json* get(const std::string& k) {
    used_.insert(k);
    if (!j_.is_object() || !j_.contains(k)) return nullptr;
    return &j_.at(k);
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  template <class T>
  void number(const std::string& k, T& out) {
    const json* v = get(k);
    if (!v) return;
    if (!v->is_number()) return fail(k, "must be a number");
    if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) return fail(k, "must be an integer");
      out = v->get<T>();
    } else {
      out = v->get<T>();
    }
  }

  void boolean(const std::string& k, bool& out) {
    const json* v = get(k);
    if (!v) return;
    if (!v->is_boolean()) return fail(k, "must be true or false");
    out = v->get<bool>();
  }

  void string(const std::string& k, std::string& out) {
    const json* v = get(k);
    if (!v) return;
    if (!v->is_string()) return fail(k, "must be a string");
    out = v->get<std::string>();
  }

  void bytes(const std::string& k, Bytes& out) { unit(k, out, parse_bytes); }
  void rate(const std::string& k, double& out) { unit(k, out, parse_rate); }
  void seconds(const std::string& k, double& out) { unit(k, out, parse_seconds); }

  template <class E>
  void choice(const std::string& k, E& out, const std::map<std::string, E>& options) {
    std::string s;
    const json* v = get(k);
    if (!v) return;
    if (!v->is_string()) return fail(k, "must be a string");
    s = v->get<std::string>();
    auto it = options.find(s);
    if (it == options.end()) {
      std::string names;
      for (const auto& [n, e] : options) names += (names.empty() ? "" : ", ") + n;
      return fail(k, "'" + s + "' is not one of: " + names);
    }
    out = it->second;
  }

  void fail(const std::string& k, const std::string& msg) { errors_.push_back(key(k) + " " + msg); }

 private:
  template <class T, class F>
  void unit(const std::string& k, T& out, F parse) {
    const json* v = get(k);
    if (!v) return;
    if (v->is_number()) {
      out = static_cast<T>(v->get<double>());
      return;
    }
    if (!v->is_string()) return fail(k, "must be a number or a string with units");
    try {
      out = static_cast<T>(parse(v->get<std::string>()));
    } catch (const ConfigError& e) {
      fail(k, e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> used_;
};

inline const std::map<std::string, LoadStrategy>& strategy_names() {
  static const std::map<std::string, LoadStrategy> m = {
      {"pipeline", LoadStrategy::PipelineParallel},     {"full_copy_gpu", LoadStrategy::FullCopyGpuConvert},
      {"full_copy_cpu", LoadStrategy::FullCopyCpuConvert}, {"serverlessllm", LoadStrategy::FullCopyGpuConvert},
      {"transformers", LoadStrategy::FullCopyCpuConvert}};
  return m;
}

inline const std::map<std::string, FaultPhase>& phase_names() {
  static const std::map<std::string, FaultPhase> m = {
      {"loading", FaultPhase::Loading}, {"inference", FaultPhase::Inference}, {"any", FaultPhase::Any}};
  return m;
}

inline const char* phase_name(FaultPhase p) {
  switch (p) {
    case FaultPhase::Loading: return "loading";
    case FaultPhase::Inference: return "inference";
    case FaultPhase::Any: return "any";
  }
  return "any";
}

inline void read_length(Reader& r, const std::string& k, LengthDistribution& out, std::vector<std::string>& errors) {
  const json* v = r.get(k);
  if (!v) return;
  if (v->is_number_integer()) {
    out = LengthDistribution::constant(v->get<std::int64_t>());
    return;
  }
  if (!v->is_object()) return r.fail(k, "must be an integer or a {lognormal = ...} table");
  Reader d(*v, r.key(k), errors);
  if (const json* f = d.get("fixed")) {
    if (!f->is_number_integer()) return d.fail("fixed", "must be an integer");
    out = LengthDistribution::constant(f->get<std::int64_t>());
  }
  if (const json* ln = d.get("lognormal")) {
    Reader l(*ln, d.key("lognormal"), errors);
    out.kind = LengthDistribution::Kind::LogNormal;
    l.number("mu", out.mu);
    l.number("sigma", out.sigma);
    l.number("min", out.min);
    l.number("max", out.max);
  }
}

inline json length_to_json(const LengthDistribution& d) {
  if (d.kind == LengthDistribution::Kind::Fixed) return d.fixed;
  return json{{"lognormal", {{"mu", d.mu}, {"sigma", d.sigma}, {"min", d.min}, {"max", d.max}}}};
}

}  // namespace detail

/// Builds a scenario from a config document layered over default_scenario().
/// Collects every problem before throwing.
inline Scenario scenario_from_json(const json& doc) {
  using detail::Reader;
  std::vector<std::string> errors;
  Scenario s = default_scenario();
  {
    Reader root(doc, "", errors);
    root.string("name", s.name);
    root.seconds("max_sim_time", s.max_sim_time);
    root.string("output_dir", s.output_dir);

    if (const json* c = root.get("cluster")) {
      Reader r(*c, "cluster", errors);
      r.number("gpu_count", s.cluster.gpu_count);
      r.bytes("hbm_capacity", s.cluster.hbm_capacity);
      r.rate("pcie_bandwidth", s.cluster.pcie_bandwidth);
      r.rate("interconnect_bandwidth", s.cluster.interconnect_bandwidth);
      r.seconds("interconnect_base_latency", s.cluster.interconnect_base_latency);
      r.rate("dram_bandwidth", s.cluster.dram_bandwidth);
      r.rate("ssd_bandwidth", s.cluster.ssd_bandwidth);
      r.rate("convert_rate", s.cluster.convert_rate);
      r.rate("cpu_convert_rate", s.cluster.cpu_convert_rate);
    }
    if (const json* c = root.get("compute")) {
      Reader r(*c, "compute", errors);
      r.seconds("prefill_per_layer_token", s.compute.prefill_per_layer_token);
      r.seconds("decode_per_layer", s.compute.decode_per_layer);
      r.number("q_recompute_factor", s.compute.q_recompute_factor);
      r.bytes("hidden_state_bytes_per_token", s.compute.hidden_state_bytes_per_token);
      r.rate("merge_rate", s.compute.merge_rate);
    }
    if (const json* m = root.get("model")) {
      Reader r(*m, "model", errors);
      std::string catalog;
      r.string("catalog", catalog);
      if (!catalog.empty()) {
        const auto loc = s.model.checkpoint_location;
        if (auto found = catalog_model(catalog)) {
          s.model = *found;
          s.model.checkpoint_location = loc;
        } else {
          r.fail("catalog", "'" + catalog + "' is not a bundled model");
        }
      }
      const std::string before = s.model.model_id;
      r.string("model_id", s.model.model_id);
      r.number("layer_count", s.model.layer_count);
      r.bytes("bytes_per_layer", s.model.bytes_per_layer);
      r.bytes("extra_bytes", s.model.extra_bytes);
      r.choice("checkpoint", s.model.checkpoint_location,
               std::map<std::string, CheckpointLocation>{{"ssd", CheckpointLocation::Ssd}, {"dram", CheckpointLocation::Dram}});
      // Default adapters follow the model they were attached to.
      for (auto& a : s.adapters)
        if (a.base_model_id == before) a.base_model_id = s.model.model_id;
    }
    if (const json* a = root.get("adapters")) {
      s.adapters.clear();
      if (!a->is_array()) {
        root.fail("adapters", "must be a list");
      } else {
        for (std::size_t i = 0; i < a->size(); ++i) {
          Reader r((*a)[i], "adapters[" + std::to_string(i) + "]", errors);
          AdapterSpec spec{"", s.model.model_id, 1e-4};
          r.string("id", spec.adapter_id);
          r.string("base_model", spec.base_model_id);
          r.number("size_fraction", spec.size_fraction);
          s.adapters.push_back(spec);
        }
      }
    }
    if (const json* l = root.get("loading")) {
      Reader r(*l, "loading", errors);
      r.choice("strategy", s.loading.strategy, detail::strategy_names());
      r.seconds("init_meta", s.loading.init_meta);
      r.boolean("warm_start", s.loading.warm_start);
    }
    if (const json* i = root.get("inference")) {
      Reader r(*i, "inference", errors);
      r.number("max_batch_size", s.inference.max_batch_size);
      r.choice("initial_mode", s.inference.initial_mode,
               std::map<std::string, ExecutionMode>{{"pipeline", ExecutionMode::PipelineParallel},
                                                    {"single_gpu", ExecutionMode::SingleGpu}});
    }
    if (const json* l = root.get("lora")) {
      Reader r(*l, "lora", errors);
      r.choice("mode", s.lora.mode,
               std::map<std::string, LoraMode>{{"merged", LoraMode::Merged}, {"unmerged", LoraMode::Unmerged}});
      r.choice("scheduling", s.lora.scheduling,
               std::map<std::string, LoraScheduling>{{"epoch", LoraScheduling::Epoch}, {"eager", LoraScheduling::Eager}});
      r.seconds("epoch_length", s.lora.epoch.epoch_length);
      r.number("starvation_epochs", s.lora.epoch.starvation_epochs);
      r.number("unmerged_overhead", s.lora.unmerged_overhead);
    }
    if (const json* w = root.get("switch")) {
      Reader r(*w, "switch", errors);
      r.boolean("enabled", s.switching.enabled);
      r.string("target", s.switching.target);
    }
    if (const json* f = root.get("faults")) {
      const json* events = f;
      std::optional<Reader> table;
      if (f->is_object()) {
        table.emplace(*f, "faults", errors);
        table->number("poisson_rate", s.faults.poisson_rate);
        events = table->get("events");
      }
      if (events && !events->is_array()) {
        root.fail("faults", "must be a list of {time, gpu, phase} or a table with events / poisson_rate");
      } else if (events) {
        for (std::size_t i = 0; i < events->size(); ++i) {
          Reader r((*events)[i], "faults[" + std::to_string(i) + "]", errors);
          CrashEvent e{0.0, 0, FaultPhase::Any};
          r.seconds("time", e.time);
          r.number("gpu", e.gpu_id);
          r.choice("phase", e.phase_hint, detail::phase_names());
          s.faults.events.push_back(e);
        }
      }
    }
    if (const json* rc = root.get("recovery")) {
      Reader r(*rc, "recovery", errors);
      r.choice("mode", s.recovery.mode,
               std::map<std::string, RecoveryMode>{{"pp", RecoveryMode::PipelineParallel}, {"full", RecoveryMode::Full}});
      r.seconds("detection_latency", s.recovery.detection_latency);
      r.choice("resume_metric", s.recovery.resume_metric,
               std::map<std::string, ResumeMetric>{{"next_token", ResumeMetric::NextToken},
                                                   {"next_segment", ResumeMetric::NextSegment}});
      r.boolean("full_restart_reloads_checkpoint", s.recovery.full_restart_reloads_checkpoint);
    }
    if (const json* w = root.get("workload")) {
      Reader r(*w, "workload", errors);
      r.choice("arrival", s.workload.arrival,
               std::map<std::string, ArrivalKind>{{"poisson", ArrivalKind::Poisson},
                                                  {"burst", ArrivalKind::Burst},
                                                  {"trace", ArrivalKind::TraceFile}});
      r.number("rate", s.workload.rate);
      r.number("count", s.workload.count);
      r.string("trace_path", s.workload.trace_path);
      detail::read_length(r, "prompt", s.workload.prompt, errors);
      detail::read_length(r, "max_new_tokens", s.workload.max_new_tokens, errors);
      r.number("adapter_switch_probability", s.workload.adapter_switch_probability);
      r.seconds("duration", s.workload.duration);
      r.number("seed", s.workload.seed);
    }
  }
  if (errors.empty()) errors = s.validate();
  if (!errors.empty()) {
    std::string all;
    for (const auto& e : errors) all += (all.empty() ? "" : "\n") + e;
    throw ConfigError(all);
  }
  return s;
}

/// Full config echo; scenario_from_json(scenario_to_json(s)) reproduces s.
inline json scenario_to_json(const Scenario& s) {
  json adapters = json::array();
  for (const auto& a : s.adapters)
    adapters.push_back({{"id", a.adapter_id}, {"base_model", a.base_model_id}, {"size_fraction", a.size_fraction}});
  json events = json::array();
  for (const auto& f : s.faults.events)
    events.push_back({{"time", f.time}, {"gpu", f.gpu_id}, {"phase", detail::phase_name(f.phase_hint)}});
  const char* arrival = s.workload.arrival == ArrivalKind::Poisson ? "poisson"
                        : s.workload.arrival == ArrivalKind::Burst ? "burst"
                                                                   : "trace";
  return json{
      {"name", s.name},
      {"max_sim_time", s.max_sim_time},
      {"output_dir", s.output_dir},
      {"cluster",
       {{"gpu_count", s.cluster.gpu_count},
        {"hbm_capacity", s.cluster.hbm_capacity},
        {"pcie_bandwidth", s.cluster.pcie_bandwidth},
        {"interconnect_bandwidth", s.cluster.interconnect_bandwidth},
        {"interconnect_base_latency", s.cluster.interconnect_base_latency},
        {"dram_bandwidth", s.cluster.dram_bandwidth},
        {"ssd_bandwidth", s.cluster.ssd_bandwidth},
        {"convert_rate", s.cluster.convert_rate},
        {"cpu_convert_rate", s.cluster.cpu_convert_rate}}},
      {"compute",
       {{"prefill_per_layer_token", s.compute.prefill_per_layer_token},
        {"decode_per_layer", s.compute.decode_per_layer},
        {"q_recompute_factor", s.compute.q_recompute_factor},
        {"hidden_state_bytes_per_token", s.compute.hidden_state_bytes_per_token},
        {"merge_rate", s.compute.merge_rate}}},
      {"model",
       {{"model_id", s.model.model_id},
        {"layer_count", s.model.layer_count},
        {"bytes_per_layer", s.model.bytes_per_layer},
        {"extra_bytes", s.model.extra_bytes},
        {"checkpoint", s.model.checkpoint_location == CheckpointLocation::Ssd ? "ssd" : "dram"}}},
      {"adapters", adapters},
      {"loading",
       {{"strategy", to_string(s.loading.strategy)},
        {"init_meta", s.loading.init_meta},
        {"warm_start", s.loading.warm_start}}},
      {"inference",
       {{"max_batch_size", s.inference.max_batch_size},
        {"initial_mode", s.inference.initial_mode == ExecutionMode::PipelineParallel ? "pipeline" : "single_gpu"}}},
      {"lora",
       {{"mode", s.lora.mode == LoraMode::Merged ? "merged" : "unmerged"},
        {"scheduling", s.lora.scheduling == LoraScheduling::Epoch ? "epoch" : "eager"},
        {"epoch_length", s.lora.epoch.epoch_length},
        {"starvation_epochs", s.lora.epoch.starvation_epochs},
        {"unmerged_overhead", s.lora.unmerged_overhead}}},
      {"switch", {{"enabled", s.switching.enabled}, {"target", s.switching.target}}},
      {"faults", {{"events", events}, {"poisson_rate", s.faults.poisson_rate}}},
      {"recovery",
       {{"mode", s.recovery.mode == RecoveryMode::Full ? "full" : "pp"},
        {"detection_latency", s.recovery.detection_latency},
        {"resume_metric", s.recovery.resume_metric == ResumeMetric::NextToken ? "next_token" : "next_segment"},
        {"full_restart_reloads_checkpoint", s.recovery.full_restart_reloads_checkpoint}}},
      {"workload",
       {{"arrival", arrival},
        {"rate", s.workload.rate},
        {"count", s.workload.count},
        {"trace_path", s.workload.trace_path},
        {"prompt", detail::length_to_json(s.workload.prompt)},
        {"max_new_tokens", detail::length_to_json(s.workload.max_new_tokens)},
        {"adapter_switch_probability", s.workload.adapter_switch_probability},
        {"duration", s.workload.duration},
        {"seed", s.workload.seed}}},
  };
}

inline std::uint64_t scenario_hash(const Scenario& s) { return fnv1a64(scenario_to_json(s).dump()); }

/// Applies "a.b.c=value". The value is parsed as JSON when possible, else
/// taken as a string. List elements are addressed by index ("faults.events.0.gpu").
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string path = detail::trim(assignment.substr(0, eq));
  const std::string text = detail::trim(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        throw ConfigError("override path '" + path + "': '" + p + "' is not a list index");
      }
      if (idx >= node->size()) throw ConfigError("override path '" + path + "': index " + p + " is out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError("override path '" + path + "': '" + p + "' is not inside a table");
      if (last) {
        (*node)[p] = value;
        return;
      }
      node = &(*node)[p];
    }
    if (last) *node = value;
  }
}

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

inline Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {}) {
  json doc = read_config_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return scenario_from_json(doc);
}

}  // namespace coldpipe
