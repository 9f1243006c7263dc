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
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "coldpipe/chain.hpp"
#include "coldpipe/cluster.hpp"
#include "coldpipe/common.hpp"
#include "coldpipe/lora.hpp"
#include "coldpipe/plan.hpp"
#include "coldpipe/recovery.hpp"
#include "coldpipe/request.hpp"
#include "coldpipe/scenario.hpp"
#include "coldpipe/switcher.hpp"
#include "coldpipe/trace.hpp"
#include "coldpipe/workload.hpp"

namespace coldpipe {

enum class EventKind {
  Arrival,
  StartupStep,      // checkpoint / adapter checkpoint / init milestones
  TransferDone,     // a loader phase finished
  StageComputeDone,
  HopDone,
  MergeDone,
  EpochTick,
  Crash,
  RecoveryStart,
};

struct Event {
  Nanos time = 0;
  std::uint64_t sequence = 0;
  EventKind kind = EventKind::Arrival;
  int gpu = -1;
  std::int64_t id = -1;
  std::uint64_t generation = 0;

  bool operator>(const Event& o) const {
    return time != o.time ? time > o.time : sequence > o.sequence;
  }
};

struct SimulationResult {
  Scenario scenario;
  Trace trace;
  std::vector<Request> requests;
  bool unrecoverable = false;
  bool truncated = false;
  Nanos end_time = 0;
  std::optional<Nanos> ready_time;
  std::optional<Nanos> switch_time;
  std::uint64_t events_processed = 0;

  std::uint64_t trace_hash() const { return trace.hash(); }

  std::vector<AuditFinding> audit_links() const {
    return audit_link_capacity(trace, scenario.cluster.pcie_bandwidth, scenario.cluster.interconnect_bandwidth,
                               scenario.cluster.interconnect_base_latency);
  }
};

/// Deterministic discrete-event simulation of one GPU server.
class Simulator {
 public:
  explicit Simulator(Scenario scenario) : sc_(std::move(scenario)) {
    auto errors = sc_.validate();
    if (!errors.empty()) {
      std::string all;
      for (const auto& e : errors) all += (all.empty() ? "" : "; ") + e;
      throw ConfigError(all);
    }
  }

  /// Runs with the scenario's generated workload.
  SimulationResult run() { return run(generate_workload(sc_.workload, sc_.adapter_ids())); }

  SimulationResult run(std::vector<Request> workload) {
    reset(std::move(workload));
    while (!events_.empty() && !stopped_) {
      Event ev = events_.top();
      events_.pop();
      if (to_seconds(ev.time) > sc_.max_sim_time) {
        result_.truncated = true;
        break;
      }
      now_ = ev.time;
      ++event_index_;
      handle(ev);
    }
    result_.end_time = now_;
    result_.requests = requests_;
    result_.trace = std::move(trace_);
    result_.events_processed = event_index_;
    return std::move(result_);
  }

 private:
  // ---- runtime state ----------------------------------------------------

  enum class LoaderPhase { Idle, CpuConvert, Transfer, Convert };

  struct Loader {
    LoaderPhase phase = LoaderPhase::Idle;
    std::optional<TransferItem> item;
    Bytes bytes = 0;
    Nanos phase_start = 0;
    Nanos phase_end = 0;
    std::uint64_t generation = 0;
  };

  struct Task {
    std::int64_t run = -1;
    int stage = 0;
  };

  struct Compute {
    bool busy = false;
    bool merging = false;
    std::optional<Task> current;
    std::string merge_target;
    Nanos busy_since = 0;
    Nanos compute_end = 0;
    std::vector<Task> ready;
    std::uint64_t generation = 0;
  };

  struct Gpu {
    GpuState state;
    Loader loader;
    Compute compute;
    std::string merged_adapter;
    bool instance_ready = false;
    std::vector<AdapterPart> demand;
  };

  struct Executor {
    int id = 0;
    ExecutionMode mode = ExecutionMode::PipelineParallel;
    int gpu = -1;
    std::optional<PipelineChain> chain;
    Nanos ready_since = kNever;
    bool retired = false;
    std::deque<RequestId> queue;    // routed, not yet admitted
    std::vector<RequestId> active;  // admitted and unfinished
    int in_flight = 0;
    EpochState epoch;
  };

  struct RequestRuntime {
    int executor = -1;
    bool in_flight = false;
    Nanos prefill_start = 0;
  };

  struct BatchRun {
    Batch batch;
    int executor = 0;
    std::vector<ChainStage> stages;
    bool cancelled = false;
    bool finished = false;
    Nanos created = 0;
  };

  // ---- setup ------------------------------------------------------------

  void reset(std::vector<Request> workload) {
    result_ = SimulationResult{};
    result_.scenario = sc_;
    trace_ = Trace{};
    events_ = decltype(events_){};
    now_ = 0;
    sequence_ = 0;
    event_index_ = 0;
    stopped_ = false;
    incarnation_ = 0;
    requests_ = std::move(workload);
    for (std::size_t i = 0; i < requests_.size(); ++i) {
      if (requests_[i].request_id != static_cast<RequestId>(i))
        throw ConfigError("workload request ids must be 0..n-1 in order");
    }
    runtime_.assign(requests_.size(), RequestRuntime{});
    runs_.clear();
    executors_.clear();
    known_adapters_.clear();
    for (const auto& a : sc_.adapters) known_adapters_.insert(a.adapter_id);
    unfinished_ = 0;
    epoch_armed_ = false;
    undetected_crashes_ = 0;
    router_ = Router{};
    switch_ = SwitchState{};

    const int n = sc_.cluster.gpu_count;
    layout_ = ModelLayout(sc_.model, sc_.adapters, n);
    ledger_ = KvLedger(sc_.model.layer_count);
    gpus_.assign(static_cast<std::size_t>(n), Gpu{});
    for (int g = 0; g < n; ++g) gpus_[static_cast<std::size_t>(g)].state.gpu_id = g;
    plan_ = plan_loading(sc_.loading.strategy, layout_, n);

    for (const auto& r : requests_) schedule(r.arrival_time, EventKind::Arrival, -1, r.request_id);
    build_faults();

    if (sc_.loading.warm_start) {
      start_warm();
    } else {
      start_cold(/*reload_checkpoint=*/true);
    }
  }

  void build_faults() {
    faults_ = sc_.faults.events;
    if (sc_.faults.poisson_rate > 0.0) {
      auto rng = labeled_stream(sc_.workload.seed, "faults");
      std::exponential_distribution<double> gap(sc_.faults.poisson_rate);
      std::uniform_int_distribution<int> pick(0, sc_.cluster.gpu_count - 1);
      for (double t = gap(rng); t < sc_.workload.duration; t += gap(rng))
        faults_.push_back(CrashEvent{t, pick(rng), FaultPhase::Any});
    }
    for (std::size_t i = 0; i < faults_.size(); ++i)
      schedule(to_nanos(faults_[i].time), EventKind::Crash, faults_[i].gpu_id, static_cast<std::int64_t>(i));
  }

  bool pipeline_strategy() const { return sc_.loading.strategy == LoadStrategy::PipelineParallel; }

  int new_executor(ExecutionMode mode, int gpu) {
    Executor ex;
    ex.id = static_cast<int>(executors_.size());
    ex.mode = mode;
    ex.gpu = gpu;
    executors_.push_back(std::move(ex));
    return executors_.back().id;
  }

  void start_warm() {
    for (auto& gpu : gpus_) {
      for (const auto& s : layout_.segments) {
        gpu.state.loaded_segments.insert(s.segment_id);
        gpu.state.hbm_used += s.bytes;
        for (const auto& a : layout_.adapters) {
          AdapterPart p{a.adapter_id, s.segment_id};
          gpu.state.loaded_adapter_parts.insert(p);
          gpu.state.hbm_used += layout_.part_bytes(p);
        }
      }
      gpu.instance_ready = true;
    }
    loading_started_ = true;
    mark_ready_once();
    const bool pipeline = sc_.inference.initial_mode == ExecutionMode::PipelineParallel && !is_full_copy(sc_.loading.strategy);
    if (pipeline) {
      const int id = new_executor(ExecutionMode::PipelineParallel, -1);
      PipelineChain chain;
      for (const auto& s : layout_.segments) chain.stages.push_back(ChainStage{s.segment_id, s.layers});
      set_chain(executors_[static_cast<std::size_t>(id)], chain);
      pipeline_executor_ = id;
      switch_.mode = ExecutionMode::PipelineParallel;
      maybe_switch();
    } else {
      switch_.mode = ExecutionMode::SingleGpu;
      pipeline_executor_ = -1;
      for (auto& gpu : gpus_) {
        const int id = new_executor(ExecutionMode::SingleGpu, gpu.state.gpu_id);
        executors_[static_cast<std::size_t>(id)].ready_since = now_;
      }
    }
  }

  /// Checkpoint to DRAM, adapter checkpoints, metadata init, then loaders.
  void start_cold(bool reload_checkpoint) {
    loading_started_ = false;
    ready_reached_ = false;
    base_ready_reached_ = false;
    const bool ssd = sc_.model.checkpoint_location == CheckpointLocation::Ssd && reload_checkpoint;
    Bytes adapter_bytes = 0;
    for (const auto& a : layout_.adapters) adapter_bytes += a.total_bytes(layout_.model);
    const Nanos ckpt = ssd ? transfer_nanos(layout_.model.total_bytes(), sc_.cluster.ssd_bandwidth) : 0;
    const Nanos lora = ssd ? transfer_nanos(adapter_bytes, sc_.cluster.ssd_bandwidth) : 0;
    const Nanos init = to_nanos(sc_.loading.init_meta);
    schedule(now_ + ckpt, EventKind::StartupStep, -1, 0, incarnation_);
    schedule(now_ + ckpt + lora, EventKind::StartupStep, -1, 1, incarnation_);
    schedule(now_ + ckpt + lora + init, EventKind::StartupStep, -1, 2, incarnation_);

    if (pipeline_strategy()) {
      switch_.mode = ExecutionMode::PipelineParallel;
      pipeline_executor_ = new_executor(ExecutionMode::PipelineParallel, -1);
    } else {
      switch_.mode = ExecutionMode::SingleGpu;
      pipeline_executor_ = -1;
      for (const auto& gpu : gpus_)
        if (gpu.state.alive) new_executor(ExecutionMode::SingleGpu, gpu.state.gpu_id);
    }
  }

  // ---- event plumbing -----------------------------------------------------

  void schedule(Nanos time, EventKind kind, int gpu, std::int64_t id, std::uint64_t generation = 0) {
    if (time < now_)
      throw InvariantViolation("event scheduled in the past (" + std::to_string(time) + " < " + std::to_string(now_) + ")",
                               event_index_);
    events_.push(Event{time, sequence_++, kind, gpu, id, generation});
  }

  void record(TraceRecord r) {
    r.time = now_;
    trace_.add(std::move(r));
  }

  void handle(const Event& ev) {
    switch (ev.kind) {
      case EventKind::Arrival: on_arrival(ev.id); break;
      case EventKind::StartupStep: on_startup_step(ev); break;
      case EventKind::TransferDone: on_loader_phase_done(ev); break;
      case EventKind::StageComputeDone: on_compute_done(ev); break;
      case EventKind::HopDone: on_hop_done(ev); break;
      case EventKind::MergeDone: on_merge_done(ev); break;
      case EventKind::EpochTick: on_epoch_tick(); break;
      case EventKind::Crash: on_crash(ev); break;
      case EventKind::RecoveryStart: on_recovery_start(ev); break;
    }
  }

  // ---- startup and loading ------------------------------------------------

  void on_startup_step(const Event& ev) {
    if (ev.generation != incarnation_) return;
    if (ev.id == 0) {
      record({.kind = TraceKind::CheckpointLoaded, .bytes = layout_.model.total_bytes()});
    } else if (ev.id == 1) {
      record({.kind = TraceKind::LoraCheckpointLoaded});
    } else {
      record({.kind = TraceKind::InitDone});
      loading_started_ = true;
      for (auto& gpu : gpus_) kick_loader(gpu.state.gpu_id);
    }
  }

  Bytes item_bytes(const TransferItem& item) const {
    return item.is_segment() ? layout_.segment_bytes(item.segment_id()) : layout_.part_bytes(item.part());
  }

  void kick_loader(int g) {
    auto& gpu = gpus_[static_cast<std::size_t>(g)];
    if (!loading_started_ || !gpu.state.alive || gpu.loader.phase != LoaderPhase::Idle) return;
    auto item = next_transfer(plan_, gpu.state, gpu.demand);
    if (!item) return;
    gpu.loader.item = item;
    gpu.loader.bytes = item_bytes(*item);
    if (sc_.loading.strategy == LoadStrategy::FullCopyCpuConvert) {
      // Each instance converts its own copy in DRAM; copies share DRAM bandwidth.
      const Nanos convert = transfer_nanos(gpu.loader.bytes, sc_.cluster.cpu_convert_rate) +
                            transfer_nanos(gpu.loader.bytes * sc_.cluster.gpu_count, sc_.cluster.dram_bandwidth);
      start_loader_phase(g, LoaderPhase::CpuConvert, convert);
    } else {
      start_loader_phase(g, LoaderPhase::Transfer, transfer_nanos(gpu.loader.bytes, sc_.cluster.pcie_bandwidth));
    }
  }

  void start_loader_phase(int g, LoaderPhase phase, Nanos duration) {
    auto& l = gpus_[static_cast<std::size_t>(g)].loader;
    l.phase = phase;
    l.phase_start = now_;
    l.phase_end = now_ + duration;
    schedule(l.phase_end, EventKind::TransferDone, g, 0, l.generation);
  }

  TraceRecord item_record(TraceKind kind, int g, const TransferItem& item, Bytes bytes, Nanos start) const {
    TraceRecord r;
    r.kind = kind;
    r.gpu = g;
    r.segment = item.segment_id();
    if (!item.is_segment()) r.adapter = item.part().adapter_id;
    r.bytes = bytes;
    r.start = start;
    return r;
  }

  void on_loader_phase_done(const Event& ev) {
    auto& gpu = gpus_[static_cast<std::size_t>(ev.gpu)];
    auto& l = gpu.loader;
    if (ev.generation != l.generation || !gpu.state.alive) return;
    const TransferItem item = *l.item;
    switch (l.phase) {
      case LoaderPhase::CpuConvert:
        start_loader_phase(ev.gpu, LoaderPhase::Transfer, transfer_nanos(l.bytes, sc_.cluster.pcie_bandwidth));
        return;
      case LoaderPhase::Transfer:
        record(item_record(TraceKind::TransferDone, ev.gpu, item, l.bytes, l.phase_start));
        if (sc_.loading.strategy == LoadStrategy::FullCopyCpuConvert) break;
        start_loader_phase(ev.gpu, LoaderPhase::Convert, transfer_nanos(l.bytes, sc_.cluster.convert_rate));
        return;
      case LoaderPhase::Convert: break;
      case LoaderPhase::Idle: return;
    }
    record(item_record(TraceKind::ConvertDone, ev.gpu, item, l.bytes, l.phase_start));
    if (item.is_segment()) {
      gpu.state.loaded_segments.insert(item.segment_id());
    } else {
      gpu.state.loaded_adapter_parts.insert(item.part());
      gpu.demand.erase(std::remove(gpu.demand.begin(), gpu.demand.end(), item.part()), gpu.demand.end());
    }
    gpu.state.hbm_used += l.bytes;
    if (gpu.state.hbm_used > sc_.cluster.hbm_capacity)
      throw InvariantViolation("GPU " + std::to_string(ev.gpu) + " exceeds HBM capacity", event_index_);
    l.phase = LoaderPhase::Idle;
    l.item.reset();
    on_loading_progress();
    kick_loader(ev.gpu);
  }

  /// Cancels the loader's current item. Partial PCIe progress is recorded.
  void abort_loader(int g) {
    auto& l = gpus_[static_cast<std::size_t>(g)].loader;
    if (l.phase == LoaderPhase::Transfer && now_ > l.phase_start) {
      const long double frac = static_cast<long double>(now_ - l.phase_start) /
                               static_cast<long double>(std::max<Nanos>(1, l.phase_end - l.phase_start));
      record(item_record(TraceKind::TransferAborted, g, *l.item,
                         static_cast<Bytes>(static_cast<long double>(l.bytes) * frac), l.phase_start));
    }
    ++l.generation;
    l.phase = LoaderPhase::Idle;
    l.item.reset();
  }

  std::vector<GpuState> states() const {
    std::vector<GpuState> out;
    out.reserve(gpus_.size());
    for (const auto& g : gpus_) out.push_back(g.state);
    return out;
  }

  void mark_ready_once() {
    if (!ready_reached_) {
      ready_reached_ = true;
      record({.kind = TraceKind::Ready});
      if (!result_.ready_time) result_.ready_time = now_;
    }
  }

  void set_chain(Executor& ex, const PipelineChain& chain) {
    ex.chain = chain;
    if (ex.ready_since == kNever) ex.ready_since = now_;
    std::string desc;
    for (const auto& s : chain.stages)
      desc += (desc.empty() ? "" : ",") + std::to_string(s.gpu_id) + ":" + std::to_string(s.layers.start) + "-" +
              std::to_string(s.layers.end);
    record({.kind = TraceKind::ChainFormed, .count = static_cast<std::int64_t>(chain.size()), .detail = desc});
  }

  void on_loading_progress() {
    const auto st = states();
    if (pipeline_strategy()) {
      auto chain = find_pipeline_chain(st, layout_);
      if (chain && !base_ready_reached_) {
        base_ready_reached_ = true;
        record({.kind = TraceKind::BaseReady});
      }
      if (pipeline_executor_ >= 0) {
        auto& ex = executors_[static_cast<std::size_t>(pipeline_executor_)];
        if (!ex.retired && !ex.chain && chain && undetected_crashes_ == 0) set_chain(ex, *chain);
        if (!ready_reached_ && ex.chain) {
          bool all = true;
          for (const auto& a : layout_.adapters) all = all && chain_supports_adapter(*ex.chain, st, layout_, a.adapter_id);
          if (all) mark_ready_once();
        }
      }
    } else {
      for (const auto& gpu : gpus_) {
        if (base_ready_reached_ || !gpu.state.alive || !holds_full_model(gpu.state, layout_)) continue;
        base_ready_reached_ = true;
        record({.kind = TraceKind::BaseReady, .gpu = gpu.state.gpu_id});
      }
      for (auto& gpu : gpus_) {
        if (!gpu.state.alive || gpu.instance_ready || !instance_complete(gpu)) continue;
        gpu.instance_ready = true;
        record({.kind = TraceKind::InstanceReady, .gpu = gpu.state.gpu_id});
        mark_ready_once();
        for (auto& ex : executors_)
          if (!ex.retired && ex.gpu == gpu.state.gpu_id && ex.ready_since == kNever) ex.ready_since = now_;
      }
    }
    maybe_switch();
    maybe_discard();
    dispatch_all();
  }

  bool instance_complete(const Gpu& gpu) const {
    if (!holds_full_model(gpu.state, layout_)) return false;
    const auto& owned = plan_.owned_adapter[static_cast<std::size_t>(gpu.state.gpu_id)];
    if (owned)
      for (const auto& s : layout_.segments)
        if (!gpu.state.holds_part(*owned, s.segment_id)) return false;
    return true;
  }

  // ---- strategy switching -------------------------------------------------

  void maybe_switch() {
    if (!sc_.switching.enabled || !pipeline_strategy() || switch_.mode != ExecutionMode::PipelineParallel) return;
    if (pipeline_executor_ < 0 || !loading_started_) return;
    if (!check_switch(states(), layout_, plan_)) return;
    switch_.mode = ExecutionMode::SingleGpu;
    switch_.switch_time = now_;
    if (!result_.switch_time) result_.switch_time = now_;
    auto& pipe = executors_[static_cast<std::size_t>(pipeline_executor_)];
    switch_.drain_set = std::set<RequestId>(pipe.active.begin(), pipe.active.end());
    record({.kind = TraceKind::Switch, .count = static_cast<std::int64_t>(switch_.drain_set.size())});
    for (auto& gpu : gpus_) {
      if (!gpu.state.alive) continue;
      gpu.instance_ready = true;
      const int id = new_executor(ExecutionMode::SingleGpu, gpu.state.gpu_id);
      executors_[static_cast<std::size_t>(id)].ready_since = now_;
    }
    // Requests that never started on the pipeline move to single GPUs.
    auto& pipe2 = executors_[static_cast<std::size_t>(pipeline_executor_)];
    std::deque<RequestId> pending;
    pending.swap(pipe2.queue);
    for (RequestId r : pending) route_single(r);
    retire_pipeline_if_drained();
  }

  void retire_pipeline_if_drained() {
    if (pipeline_executor_ < 0 || switch_.mode != ExecutionMode::SingleGpu) return;
    auto& pipe = executors_[static_cast<std::size_t>(pipeline_executor_)];
    if (pipe.retired || !pipe.active.empty() || !pipe.queue.empty() || pipe.in_flight > 0) return;
    pipe.retired = true;
    maybe_discard();
  }

  /// Once the pipeline has drained, GPUs keep only their own adapter.
  void maybe_discard() {
    if (switch_.mode != ExecutionMode::SingleGpu || pipeline_executor_ < 0) return;
    if (!executors_[static_cast<std::size_t>(pipeline_executor_)].retired) return;
    for (auto& gpu : gpus_) {
      if (!gpu.state.alive || !holds_full_model(gpu.state, layout_)) continue;
      const auto& owned = plan_.owned_adapter[static_cast<std::size_t>(gpu.state.gpu_id)];
      // Stop staging other adapters, or the loader would fetch them again.
      auto& staged = plan_.adapter_orders[static_cast<std::size_t>(gpu.state.gpu_id)];
      staged.clear();
      if (owned)
        for (const auto& s : layout_.segments) staged.push_back(AdapterPart{*owned, s.segment_id});
      std::set<std::string> keep;
      if (owned) keep.insert(*owned);
      // Keep adapters this GPU is actively serving or has been asked to load.
      keep.insert(gpu.merged_adapter);
      for (const auto& p : gpu.demand) keep.insert(p.adapter_id);
      for (const auto& ex : executors_)
        if (!ex.retired && ex.gpu == gpu.state.gpu_id)
          for (RequestId r : ex.active) keep.insert(requests_[static_cast<std::size_t>(r)].adapter_id);
      const auto before = gpu.state.loaded_adapter_parts.size();
      gpu.state = discard_surplus_adapter_parts(gpu.state, keep, layout_);
      const auto dropped = before - gpu.state.loaded_adapter_parts.size();
      if (dropped > 0)
        record({.kind = TraceKind::Discard, .gpu = gpu.state.gpu_id, .count = static_cast<std::int64_t>(dropped)});
    }
  }

  std::vector<GpuView> gpu_views(const std::string& adapter) const {
    std::vector<GpuView> views;
    for (const auto& gpu : gpus_) {
      GpuView v;
      v.gpu_id = gpu.state.gpu_id;
      bool serving = false;
      for (const auto& ex : executors_)
        if (!ex.retired && ex.gpu == v.gpu_id) serving = true;
      v.alive = gpu.state.alive && serving;
      v.merged_adapter = gpu.merged_adapter;
      const auto& owned = plan_.owned_adapter[static_cast<std::size_t>(v.gpu_id)];
      bool has = adapter.empty() || (owned && *owned == adapter);
      if (!has) {
        has = true;
        for (const auto& s : layout_.segments) has = has && gpu.state.holds_part(adapter, s.segment_id);
      }
      v.has_adapter = has;
      v.merged_bytes = layout_.adapter_bytes_in(gpu.merged_adapter, LayerRange{0, layout_.model.layer_count});
      views.push_back(v);
    }
    return views;
  }

  int single_executor_for(int gpu) const {
    for (const auto& ex : executors_)
      if (!ex.retired && ex.mode == ExecutionMode::SingleGpu && ex.gpu == gpu) return ex.id;
    return -1;
  }

  /// Routes a request to a single-GPU executor. Returns false if none is alive.
  bool route_single(RequestId r, bool admitted = false) {
    const auto& req = requests_[static_cast<std::size_t>(r)];
    const int g = router_.pick(req.adapter_id, gpu_views(req.adapter_id));
    const int ex_id = g < 0 ? -1 : single_executor_for(g);
    if (ex_id < 0) {
      orphans_.push_back(r);
      return false;
    }
    auto& ex = executors_[static_cast<std::size_t>(ex_id)];
    runtime_[static_cast<std::size_t>(r)].executor = ex_id;
    requests_[static_cast<std::size_t>(r)].mode = ExecutionMode::SingleGpu;
    if (admitted) ex.active.push_back(r);
    else ex.queue.push_back(r);
    return true;
  }

  // ---- arrivals and admission --------------------------------------------

  void on_arrival(RequestId r) {
    auto& req = requests_[static_cast<std::size_t>(r)];
    record({.kind = TraceKind::Arrival, .request = r, .adapter = req.adapter_id, .count = req.prompt_tokens});
    AdapterQueues scratch;
    auto outcome = enqueue_by_adapter(req, scratch, known_adapters_);
    if (!outcome.accepted) {
      req.stage = RequestStage::Rejected;
      record({.kind = TraceKind::Rejected, .request = r, .adapter = req.adapter_id, .detail = outcome.error});
      return;
    }
    ++unfinished_;
    req.stage = RequestStage::Queued;
    if (switch_.mode == ExecutionMode::PipelineParallel && pipeline_executor_ >= 0) {
      runtime_[static_cast<std::size_t>(r)].executor = pipeline_executor_;
      req.mode = ExecutionMode::PipelineParallel;
      executors_[static_cast<std::size_t>(pipeline_executor_)].queue.push_back(r);
    } else {
      route_single(r);
    }
    arm_epoch_tick();
    dispatch_all();
  }

  bool merged_epoch() const {
    return sc_.lora.mode == LoraMode::Merged && sc_.lora.scheduling == LoraScheduling::Epoch;
  }

  std::map<std::string, std::int64_t> pending_by_adapter(const Executor& ex) const {
    std::map<std::string, std::int64_t> pending;
    for (RequestId r : ex.queue) ++pending[requests_[static_cast<std::size_t>(r)].adapter_id];
    for (RequestId r : ex.active) ++pending[requests_[static_cast<std::size_t>(r)].adapter_id];
    return pending;
  }

  void arm_epoch_tick() {
    if (epoch_armed_ || !merged_epoch() || layout_.adapters.empty()) return;
    epoch_armed_ = true;
    schedule(now_ + to_nanos(sc_.lora.epoch.epoch_length), EventKind::EpochTick, -1, 0);
  }

  void on_epoch_tick() {
    epoch_armed_ = false;
    for (auto& ex : executors_) {
      if (ex.retired) continue;
      auto directive = epoch_tick(now_, pending_by_adapter(ex), ex.epoch, sc_.lora.epoch);
      if (directive)
        record({.kind = TraceKind::EpochSwitch, .adapter = directive->next_adapter, .count = ex.id,
                .detail = directive->forced_by_starvation ? "starvation" : "epoch"});
    }
    if (unfinished_ > 0) arm_epoch_tick();
    dispatch_all();
  }

  void dispatch_all() {
    for (std::size_t i = 0; i < executors_.size(); ++i) dispatch(static_cast<int>(i));
  }

  bool executor_ready(const Executor& ex) const {
    if (ex.retired) return false;
    if (ex.mode == ExecutionMode::PipelineParallel) return ex.chain.has_value();
    const auto& gpu = gpus_[static_cast<std::size_t>(ex.gpu)];
    return gpu.state.alive && gpu.instance_ready && holds_full_model(gpu.state, layout_);
  }

  PipelineChain executor_chain(const Executor& ex) const {
    if (ex.mode == ExecutionMode::PipelineParallel) return *ex.chain;
    return PipelineChain{{ChainStage{ex.gpu, LayerRange{0, layout_.model.layer_count}}}};
  }

  int capacity(const Executor& ex) const {
    return ex.mode == ExecutionMode::PipelineParallel ? static_cast<int>(ex.chain->size()) : 1;
  }

  /// Can the executor's chain run this adapter now? Requests missing slices.
  bool adapter_available(const Executor& ex, const std::string& adapter) {
    if (adapter.empty()) return true;
    const auto chain = executor_chain(ex);
    const auto st = states();
    auto missing = missing_adapter_parts(chain, st, layout_, adapter);
    if (missing.empty()) return true;
    for (const auto& [g, part] : missing) {
      auto& d = gpus_[static_cast<std::size_t>(g)].demand;
      if (std::find(d.begin(), d.end(), part) == d.end()) {
        d.push_back(part);
        kick_loader(g);
      }
    }
    return false;
  }

  void admit(Executor& ex, const std::optional<std::string>& only_adapter) {
    const auto room = continuous_batch_admit(static_cast<std::int64_t>(ex.queue.size()),
                                             static_cast<std::int64_t>(ex.active.size()), sc_.inference.max_batch_size);
    std::int64_t admitted = 0;
    for (auto it = ex.queue.begin(); it != ex.queue.end() && admitted < room;) {
      auto& req = requests_[static_cast<std::size_t>(*it)];
      if (only_adapter && req.adapter_id != *only_adapter) {
        if (sc_.lora.scheduling == LoraScheduling::Eager) break;
        ++it;
        continue;
      }
      req.stage = req.generated > 0 ? RequestStage::AwaitingReconstruction : RequestStage::Prefill;
      ex.active.push_back(*it);
      it = ex.queue.erase(it);
      ++admitted;
    }
  }

  static BatchPhase phase_of(const Request& r) {
    if (r.stage == RequestStage::AwaitingReconstruction) return BatchPhase::Reconstruct;
    if (r.stage == RequestStage::Prefill) return BatchPhase::Prefill;
    return BatchPhase::Decode;
  }

  static int phase_rank(BatchPhase p) { return p == BatchPhase::Decode ? 1 : 0; }

  /// Forms the next batch or returns nothing.
  std::optional<Batch> form_batch(Executor& ex) {
    std::vector<RequestId> candidates;
    for (RequestId r : ex.active) {
      if (runtime_[static_cast<std::size_t>(r)].in_flight) continue;
      candidates.push_back(r);
    }
    if (candidates.empty()) return std::nullopt;
    const auto& reqs = requests_;
    auto adapter_of = [&](RequestId r) -> const std::string& { return reqs[static_cast<std::size_t>(r)].adapter_id; };

    Batch b;
    if (merged_epoch()) {
      const std::string active = ex.epoch.active_adapter;
      int best_rank = 2;
      for (RequestId r : candidates)
        if (adapter_of(r) == active) best_rank = std::min(best_rank, phase_rank(phase_of(reqs[static_cast<std::size_t>(r)])));
      if (best_rank == 2) return std::nullopt;
      // Rebuilds before plain prefills before decodes.
      BatchPhase phase = BatchPhase::Decode;
      for (RequestId r : candidates) {
        if (adapter_of(r) != active) continue;
        const BatchPhase p = phase_of(reqs[static_cast<std::size_t>(r)]);
        if (p == BatchPhase::Reconstruct) phase = p;
        else if (p == BatchPhase::Prefill && phase != BatchPhase::Reconstruct) phase = p;
      }
      b.adapter_id = active;
      b.phase = phase;
      for (RequestId r : candidates) {
        if (static_cast<int>(b.request_ids.size()) >= sc_.inference.max_batch_size) break;
        if (adapter_of(r) == active && phase_of(reqs[static_cast<std::size_t>(r)]) == phase) b.request_ids.push_back(r);
      }
    } else {
      // Oldest first; eager stops at the first request of another adapter.
      std::sort(candidates.begin(), candidates.end());
      const auto& head = reqs[static_cast<std::size_t>(candidates.front())];
      b.adapter_id = head.adapter_id;
      b.phase = phase_of(head);
      for (RequestId r : candidates) {
        if (static_cast<int>(b.request_ids.size()) >= sc_.inference.max_batch_size) break;
        const auto& req = reqs[static_cast<std::size_t>(r)];
        if (req.adapter_id != b.adapter_id) {
          if (sc_.lora.mode == LoraMode::Merged) break;
          continue;
        }
        if (phase_of(req) == b.phase) b.request_ids.push_back(r);
      }
    }
    if (b.request_ids.empty()) return std::nullopt;
    return b;
  }

  void maybe_rotate_idle_adapter(Executor& ex) {
    if (!merged_epoch() || layout_.adapters.empty()) return;
    auto pending = pending_by_adapter(ex);
    auto it = pending.find(ex.epoch.active_adapter);
    if (it != pending.end() && it->second > 0) return;
    bool other = false;
    for (const auto& [a, n] : pending) other = other || n > 0;
    if (!other) return;
    // Nothing left for the active adapter: end its epoch early.
    ex.epoch.epoch_started = now_ - to_nanos(sc_.lora.epoch.epoch_length);
    auto d = epoch_tick(now_, pending, ex.epoch, sc_.lora.epoch);
    if (d) record({.kind = TraceKind::EpochSwitch, .adapter = d->next_adapter, .count = ex.id, .detail = "idle"});
  }

  void dispatch(int ex_id) {
    auto& ex = executors_[static_cast<std::size_t>(ex_id)];
    if (!executor_ready(ex)) return;
    maybe_rotate_idle_adapter(ex);
    std::optional<std::string> only;
    if (merged_epoch()) only = ex.epoch.active_adapter;
    admit(ex, only);
    while (ex.in_flight < capacity(ex)) {
      auto batch = form_batch(ex);
      if (!batch) break;
      if (!adapter_available(ex, batch->adapter_id)) break;
      submit(ex, std::move(*batch));
    }
  }

  void submit(Executor& ex, Batch batch) {
    BatchRun run;
    batch.batch_id = static_cast<BatchId>(runs_.size());
    run.batch = std::move(batch);
    run.executor = ex.id;
    run.stages = executor_chain(ex).stages;
    run.created = now_;
    for (RequestId r : run.batch.request_ids) runtime_[static_cast<std::size_t>(r)].in_flight = true;
    ++ex.in_flight;
    const auto id = static_cast<std::int64_t>(runs_.size());
    runs_.push_back(std::move(run));
    enqueue_task(Task{id, 0});
  }

  // ---- compute ------------------------------------------------------------

  void enqueue_task(Task t) {
    const int g = runs_[static_cast<std::size_t>(t.run)].stages[static_cast<std::size_t>(t.stage)].gpu_id;
    gpus_[static_cast<std::size_t>(g)].compute.ready.push_back(t);
    kick_gpu(g);
  }

  std::tuple<int, int, BatchId> task_key(const Gpu& gpu, const Task& t) const {
    const auto& run = runs_[static_cast<std::size_t>(t.run)];
    const int affinity = merged_epoch() && run.batch.adapter_id != gpu.merged_adapter ? 1 : 0;
    return {affinity, phase_rank(run.batch.phase), run.batch.batch_id};
  }

  void kick_gpu(int g) {
    auto& gpu = gpus_[static_cast<std::size_t>(g)];
    auto& c = gpu.compute;
    if (c.busy || !gpu.state.alive || c.ready.empty()) return;
    auto best = std::min_element(c.ready.begin(), c.ready.end(), [&](const Task& a, const Task& b) {
      return task_key(gpu, a) < task_key(gpu, b);
    });
    const Task task = *best;
    const auto& run = runs_[static_cast<std::size_t>(task.run)];
    const auto& stage = run.stages[static_cast<std::size_t>(task.stage)];
    c.busy = true;
    c.busy_since = now_;
    if (sc_.lora.mode == LoraMode::Merged && run.batch.adapter_id != gpu.merged_adapter) {
      // Merge first; the task stays queued and is picked again afterwards.
      c.merging = true;
      c.merge_target = run.batch.adapter_id;
      const double secs = merge_time(layout_.adapter_bytes_in(gpu.merged_adapter, stage.layers),
                                     layout_.adapter_bytes_in(run.batch.adapter_id, stage.layers), sc_.compute.merge_rate);
      schedule(now_ + to_nanos(secs), EventKind::MergeDone, g, 0, c.generation);
      return;
    }
    c.ready.erase(best);
    c.current = task;
    c.merging = false;
    start_stage(g, task);
  }

  void on_merge_done(const Event& ev) {
    auto& gpu = gpus_[static_cast<std::size_t>(ev.gpu)];
    auto& c = gpu.compute;
    if (ev.generation != c.generation || !gpu.state.alive) return;
    record({.kind = TraceKind::Merge, .gpu = ev.gpu, .adapter = c.merge_target, .start = c.busy_since,
            .detail = gpu.merged_adapter});
    gpu.merged_adapter = c.merge_target;
    c.busy = false;
    c.merging = false;
    kick_gpu(ev.gpu);
  }

  double stage_seconds(const BatchRun& run, const ChainStage& stage, std::int64_t& work_units) const {
    const int layers = stage.layers.size();
    double secs = 0.0;
    work_units = 0;
    switch (run.batch.phase) {
      case BatchPhase::Prefill: {
        std::int64_t tokens = 0;
        for (RequestId r : run.batch.request_ids) tokens += requests_[static_cast<std::size_t>(r)].prompt_tokens;
        secs = prefill_time(layers, tokens, 1, sc_.compute);
        work_units = static_cast<std::int64_t>(layers) * tokens;
        break;
      }
      case BatchPhase::Decode: {
        const auto batch = static_cast<std::int64_t>(run.batch.request_ids.size());
        secs = decode_step_time(layers, batch, sc_.compute);
        work_units = static_cast<std::int64_t>(layers) * batch;
        break;
      }
      case BatchPhase::Reconstruct: {
        for (RequestId r : run.batch.request_ids) {
          const auto& req = requests_[static_cast<std::size_t>(r)];
          const int reused = ledger_.count_on(r, stage.layers.start, stage.layers.end, stage.gpu_id);
          secs += reconstruction_cost(reused, layers - reused, req.merged_input_tokens(), sc_.compute).total();
          work_units += static_cast<std::int64_t>(layers) * req.merged_input_tokens();
        }
        break;
      }
    }
    if (sc_.lora.mode == LoraMode::Unmerged && !run.batch.adapter_id.empty()) secs *= 1.0 + sc_.lora.unmerged_overhead;
    return secs;
  }

  Bytes hop_bytes(const BatchRun& run) const {
    std::int64_t tokens = 0;
    for (RequestId r : run.batch.request_ids) {
      const auto& req = requests_[static_cast<std::size_t>(r)];
      if (run.batch.phase == BatchPhase::Prefill) tokens += req.prompt_tokens;
      else if (run.batch.phase == BatchPhase::Reconstruct) tokens += req.merged_input_tokens();
      else tokens += 1;
    }
    return tokens * sc_.compute.hidden_state_bytes_per_token;
  }

  void start_stage(int g, const Task& task) {
    auto& run = runs_[static_cast<std::size_t>(task.run)];
    const auto& stage = run.stages[static_cast<std::size_t>(task.stage)];
    if (run.batch.phase == BatchPhase::Decode) {
      // Every layer of this stage must hold the request's KV cache here.
      for (RequestId r : run.batch.request_ids)
        if (ledger_.count_on(r, stage.layers.start, stage.layers.end, g) != stage.layers.size())
          throw InvariantViolation("KV cache missing for request " + std::to_string(r) + " on GPU " + std::to_string(g),
                                   event_index_);
    }
    if (task.stage == 0 && run.batch.phase == BatchPhase::Prefill)
      for (RequestId r : run.batch.request_ids) runtime_[static_cast<std::size_t>(r)].prefill_start = now_;
    std::int64_t work = 0;
    const Nanos duration = to_nanos(stage_seconds(run, stage, work));
    auto& c = gpus_[static_cast<std::size_t>(g)].compute;
    c.compute_end = now_ + duration;
    schedule(c.compute_end, EventKind::StageComputeDone, g, work, c.generation);
  }

  void on_compute_done(const Event& ev) {
    auto& gpu = gpus_[static_cast<std::size_t>(ev.gpu)];
    auto& c = gpu.compute;
    if (ev.generation != c.generation || !gpu.state.alive || !c.current) return;
    const Task task = *c.current;
    auto& run = runs_[static_cast<std::size_t>(task.run)];
    const auto& stage = run.stages[static_cast<std::size_t>(task.stage)];
    record({.kind = TraceKind::StageCompute, .gpu = ev.gpu, .batch = run.batch.batch_id, .segment = task.stage,
            .adapter = run.batch.adapter_id, .count = ev.id, .start = c.busy_since, .detail = to_string(run.batch.phase)});
    if (run.batch.phase != BatchPhase::Decode)
      for (RequestId r : run.batch.request_ids) ledger_.write(r, stage.layers.start, stage.layers.end, ev.gpu);
    if (task.stage + 1 < static_cast<int>(run.stages.size())) {
      const Nanos hop = transfer_nanos(hop_bytes(run), sc_.cluster.interconnect_bandwidth,
                                       sc_.cluster.interconnect_base_latency);
      c.compute_end = now_;
      schedule(now_ + hop, EventKind::HopDone, ev.gpu, 0, c.generation);
      return;
    }
    c.busy = false;
    c.current.reset();
    finish_run(task.run);
    kick_gpu(ev.gpu);
  }

  void on_hop_done(const Event& ev) {
    auto& gpu = gpus_[static_cast<std::size_t>(ev.gpu)];
    auto& c = gpu.compute;
    if (ev.generation != c.generation || !gpu.state.alive || !c.current) return;
    const Task task = *c.current;
    const auto& run = runs_[static_cast<std::size_t>(task.run)];
    const int peer = run.stages[static_cast<std::size_t>(task.stage + 1)].gpu_id;
    record({.kind = TraceKind::Hop, .gpu = ev.gpu, .peer = peer, .batch = run.batch.batch_id, .bytes = hop_bytes(run),
            .start = c.compute_end});
    c.busy = false;
    c.current.reset();
    enqueue_task(Task{task.run, task.stage + 1});
    kick_gpu(ev.gpu);
  }

  void emit_token(Request& req, bool first) {
    record({.kind = first ? TraceKind::FirstToken : TraceKind::Token, .request = req.request_id,
            .adapter = req.adapter_id, .count = 1});
  }

  void finish_run(std::int64_t run_id) {
    auto& run = runs_[static_cast<std::size_t>(run_id)];
    run.finished = true;
    auto& ex = executors_[static_cast<std::size_t>(run.executor)];
    --ex.in_flight;
    for (RequestId r : run.batch.request_ids) {
      auto& req = requests_[static_cast<std::size_t>(r)];
      auto& rt = runtime_[static_cast<std::size_t>(r)];
      rt.in_flight = false;
      switch (run.batch.phase) {
        case BatchPhase::Prefill:
          if (!req.ttft) {
            req.ttft = now_ - req.arrival_time;
            req.prefill_path = now_ - rt.prefill_start;
            const Nanos ready = ex.ready_since == kNever ? rt.prefill_start : ex.ready_since;
            req.ready_wait = std::clamp<Nanos>(ready - req.arrival_time, 0, *req.ttft - req.prefill_path);
            req.queueing = *req.ttft - req.ready_wait - req.prefill_path;
            emit_token(req, true);
          } else {
            emit_token(req, false);
          }
          req.stage = RequestStage::Decode;
          break;
        case BatchPhase::Reconstruct:
          req.stage = RequestStage::Decode;
          break;
        case BatchPhase::Decode:
          ++req.generated;
          emit_token(req, false);
          if (req.generated >= req.max_new_tokens) complete(req, ex);
          break;
      }
      if (req.stage == RequestStage::Decode && req.max_new_tokens <= req.generated) complete(req, ex);
    }
    if (run.executor == pipeline_executor_) retire_pipeline_if_drained();
    dispatch_all();
  }

  void complete(Request& req, Executor& ex) {
    if (req.stage == RequestStage::Done) return;
    req.stage = RequestStage::Done;
    req.completion_time = now_;
    record({.kind = TraceKind::RequestDone, .request = req.request_id, .adapter = req.adapter_id,
            .count = req.generated});
    ex.active.erase(std::remove(ex.active.begin(), ex.active.end(), req.request_id), ex.active.end());
    ledger_.erase_request(req.request_id);
    --unfinished_;
  }

  // ---- faults ------------------------------------------------------------

  /// Cancels a batch run: drops its queued tasks and stops any GPU running it.
  void cancel_run(std::int64_t run_id) {
    auto& run = runs_[static_cast<std::size_t>(run_id)];
    if (!run_active(run)) return;
    run.cancelled = true;
    for (auto& gpu : gpus_) {
      auto& c = gpu.compute;
      c.ready.erase(std::remove_if(c.ready.begin(), c.ready.end(), [&](const Task& t) { return t.run == run_id; }),
                    c.ready.end());
      // A merge in progress finishes; it only changes the active adapter.
      if (c.current && c.current->run == run_id) {
        ++c.generation;
        c.busy = false;
        c.merging = false;
        c.current.reset();
      }
    }
    auto& ex = executors_[static_cast<std::size_t>(run.executor)];
    --ex.in_flight;
    for (RequestId r : run.batch.request_ids) {
      auto& req = requests_[static_cast<std::size_t>(r)];
      runtime_[static_cast<std::size_t>(r)].in_flight = false;
      if (req.stage == RequestStage::Done) continue;
      if (run.batch.phase == BatchPhase::Prefill) {
        ledger_.erase_request(r);
        req.stage = req.generated > 0 ? RequestStage::AwaitingReconstruction : RequestStage::Prefill;
      } else {
        req.stage = RequestStage::AwaitingReconstruction;
      }
    }
  }

  static bool run_active(const BatchRun& run) { return !run.cancelled && !run.finished; }

  void on_crash(const Event& ev) {
    const auto& fault = faults_[static_cast<std::size_t>(ev.id)];
    auto& gpu = gpus_[static_cast<std::size_t>(ev.gpu)];
    const bool phase_ok = fault.phase_hint == FaultPhase::Any ||
                          (fault.phase_hint == FaultPhase::Loading && !ready_reached_) ||
                          (fault.phase_hint == FaultPhase::Inference && ready_reached_);
    if (!gpu.state.alive || !phase_ok || stopped_) {
      record({.kind = TraceKind::CrashSkipped, .gpu = ev.gpu});
      return;
    }
    record({.kind = TraceKind::Crash, .gpu = ev.gpu});
    ++undetected_crashes_;
    abort_loader(ev.gpu);
    gpu.state.alive = false;
    gpu.state.loaded_segments.clear();
    gpu.state.loaded_adapter_parts.clear();
    gpu.state.hbm_used = 0;
    gpu.demand.clear();
    gpu.merged_adapter.clear();
    gpu.instance_ready = false;
    ++gpu.compute.generation;
    gpu.compute = Compute{.generation = gpu.compute.generation};

    // Every batch whose chain touches the dead GPU is lost.
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      const auto& run = runs_[i];
      if (!run_active(run)) continue;
      if (std::any_of(run.stages.begin(), run.stages.end(), [&](const ChainStage& s) { return s.gpu_id == ev.gpu; }))
        cancel_run(static_cast<std::int64_t>(i));
    }
    for (RequestId r : ledger_.erase_gpu(ev.gpu)) {
      auto& req = requests_[static_cast<std::size_t>(r)];
      if (req.stage == RequestStage::Decode && !runtime_[static_cast<std::size_t>(r)].in_flight)
        req.stage = RequestStage::AwaitingReconstruction;
    }
    for (auto& ex : executors_) {
      if (ex.retired) continue;
      if (ex.mode == ExecutionMode::PipelineParallel && ex.chain && ex.chain->includes_gpu(ev.gpu)) ex.chain.reset();
      if (ex.mode == ExecutionMode::SingleGpu && ex.gpu == ev.gpu) {
        ex.retired = true;
        orphan_executor_requests(ex);
      }
    }
    for (int g : alive_gpus()) kick_gpu(g);
    schedule(now_ + to_nanos(sc_.recovery.detection_latency), EventKind::RecoveryStart, ev.gpu, 0, incarnation_);
  }

  void orphan_executor_requests(Executor& ex) {
    for (RequestId r : ex.active) {
      auto& req = requests_[static_cast<std::size_t>(r)];
      if (req.stage == RequestStage::Decode) req.stage = RequestStage::AwaitingReconstruction;
      ledger_.erase_request(r);
      orphans_admitted_.push_back(r);
    }
    for (RequestId r : ex.queue) orphans_.push_back(r);
    ex.active.clear();
    ex.queue.clear();
  }

  void reroute_orphans() {
    std::vector<RequestId> admitted;
    admitted.swap(orphans_admitted_);
    std::vector<RequestId> queued;
    queued.swap(orphans_);
    for (RequestId r : admitted) route_single(r, /*admitted=*/true);
    for (RequestId r : queued) route_single(r);
  }

  std::vector<int> alive_gpus() const {
    std::vector<int> ids;
    for (const auto& g : gpus_)
      if (g.state.alive) ids.push_back(g.state.gpu_id);
    return ids;
  }

  void on_recovery_start(const Event& ev) {
    if (stopped_) return;
    --undetected_crashes_;
    record({.kind = TraceKind::RecoveryStart, .gpu = ev.gpu});
    if (alive_gpus().empty()) {
      record({.kind = TraceKind::Unrecoverable});
      result_.unrecoverable = true;
      stopped_ = true;
      return;
    }
    if (sc_.recovery.mode == RecoveryMode::Full) {
      full_restart();
      return;
    }
    // Single-GPU executors on dead GPUs hand their requests to survivors.
    if (switch_.mode == ExecutionMode::SingleGpu || pipeline_executor_ < 0) reroute_orphans();
    if (pipeline_executor_ >= 0) {
      auto& ex = executors_[static_cast<std::size_t>(pipeline_executor_)];
      if (!ex.retired && !ex.chain) {
        const auto st = states();
        if (auto chain = find_pipeline_chain(st, layout_)) {
          set_chain(ex, *chain);
        } else {
          reassign_survivors();
        }
      }
    }
    on_loading_progress();
  }

  /// Layer reassignment. In-progress segments count toward overlap; those
  /// outside a survivor's new block are abandoned so the block loads first.
  void reassign_survivors() {
    std::vector<GpuState> credit;
    for (const auto& g : gpus_) {
      if (!g.state.alive) continue;
      GpuState s = g.state;
      if (g.loader.item && g.loader.item->is_segment()) s.loaded_segments.insert(g.loader.item->segment_id());
      credit.push_back(std::move(s));
    }
    const auto re = reassign_layers(credit, layout_);
    apply_reassignment(plan_, re, layout_);
    std::string desc;
    for (const auto& [gpu, block] : re.target_blocks)
      desc += (desc.empty() ? "" : ",") + std::to_string(gpu) + ":" + std::to_string(block.first) + "-" +
              std::to_string(block.last);
    record({.kind = TraceKind::Reassign, .count = static_cast<std::int64_t>(re.target_blocks.size()), .detail = desc});
    for (const auto& [gpu, block] : re.target_blocks) {
      auto& l = gpus_[static_cast<std::size_t>(gpu)].loader;
      if (l.item && l.item->is_segment() && !block.contains(l.item->segment_id())) abort_loader(gpu);
    }
    for (int g : alive_gpus()) kick_loader(g);
  }

  /// Discards all state and restarts loading and inference over survivors.
  void full_restart() {
    record({.kind = TraceKind::FullRestart});
    ++incarnation_;
    for (auto& gpu : gpus_) {
      if (gpu.loader.phase != LoaderPhase::Idle) abort_loader(gpu.state.gpu_id);
      ++gpu.loader.generation;
      gpu.state.loaded_segments.clear();
      gpu.state.loaded_adapter_parts.clear();
      gpu.state.hbm_used = 0;
      gpu.demand.clear();
      gpu.merged_adapter.clear();
      gpu.instance_ready = false;
      gpu.compute = Compute{.generation = gpu.compute.generation + 1};
    }
    for (auto& run : runs_) run.cancelled = true;
    ledger_.clear();
    for (auto& ex : executors_) {
      ex.retired = true;
      ex.active.clear();
      ex.queue.clear();
      ex.in_flight = 0;
    }
    orphans_.clear();
    orphans_admitted_.clear();
    const auto survivors = alive_gpus();
    const int m = static_cast<int>(survivors.size());
    layout_ = ModelLayout(sc_.model, sc_.adapters, std::min(m, sc_.model.layer_count));
    plan_ = plan_loading_over(sc_.loading.strategy, layout_, survivors, sc_.cluster.gpu_count);
    switch_ = SwitchState{};
    start_cold(sc_.recovery.full_restart_reloads_checkpoint);
    for (auto& req : requests_) {
      if (req.stage == RequestStage::Done || req.stage == RequestStage::Rejected) continue;
      if (now_ < req.arrival_time) continue;  // not arrived yet; Arrival routes it
      req.generated = 0;
      req.stage = RequestStage::Queued;
      auto& rt = runtime_[static_cast<std::size_t>(req.request_id)];
      rt.in_flight = false;
      if (pipeline_executor_ >= 0) {
        rt.executor = pipeline_executor_;
        req.mode = ExecutionMode::PipelineParallel;
        executors_[static_cast<std::size_t>(pipeline_executor_)].queue.push_back(req.request_id);
      } else {
        route_single(req.request_id);
      }
    }
  }

  // ---- members --------------------------------------------------------------

  Scenario sc_;
  SimulationResult result_;
  Trace trace_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  Nanos now_ = 0;
  std::uint64_t sequence_ = 0;
  std::uint64_t event_index_ = 0;
  bool stopped_ = false;
  std::uint64_t incarnation_ = 0;

  ModelLayout layout_;
  LoadPlan plan_;
  KvLedger ledger_;
  std::vector<Gpu> gpus_;
  std::vector<Request> requests_;
  std::vector<RequestRuntime> runtime_;
  std::vector<BatchRun> runs_;
  std::vector<Executor> executors_;
  std::vector<CrashEvent> faults_;
  std::set<std::string> known_adapters_;
  std::vector<RequestId> orphans_;
  std::vector<RequestId> orphans_admitted_;
  int pipeline_executor_ = -1;
  std::int64_t unfinished_ = 0;
  bool epoch_armed_ = false;
  int undetected_crashes_ = 0;
  bool loading_started_ = false;
  bool ready_reached_ = false;
  bool base_ready_reached_ = false;
  Router router_;
  SwitchState switch_;
};

/// Runs one scenario end to end.
inline SimulationResult simulate(const Scenario& scenario) { return Simulator(scenario).run(); }

inline SimulationResult simulate(const Scenario& scenario, std::vector<Request> workload) {
  return Simulator(scenario).run(std::move(workload));
}

}  // namespace coldpipe
