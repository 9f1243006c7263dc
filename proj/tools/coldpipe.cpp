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

// coldpipe command-line runner: run, compare, plan, validate.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coldpipe/coldpipe.hpp"

namespace fs = std::filesystem;
using namespace coldpipe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInvariant = 2;

Scenario load(const std::string& config, const std::vector<std::string>& overrides) {
  json doc = config.empty() ? json::object() : read_config_file(config);
  for (const auto& o : overrides) apply_override(doc, o);
  return scenario_from_json(doc);
}

fs::path output_root(const Scenario& sc, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!sc.output_dir.empty()) return sc.output_dir;
  if (const char* env = std::getenv("COLDPIPE_OUTPUT_ROOT"); env && *env) return fs::path(env) / sc.name;
  return fs::path("out") / sc.name;
}

template <class F>
int guarded(F body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration:\n" << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  }
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coldpipe: cold-start simulator for pipeline-parallel LLM serving"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  double bin = kDefaultThroughputBin;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "JSON scenario file (omit for built-in defaults)");
    sub->add_option("--set", overrides, "dotted-path override, e.g. loading.strategy=full_copy_gpu")->allow_extra_args(false);
  };

  auto* run = app.add_subcommand("run", "run one scenario and write metric files");
  add_common(run);
  run->add_option("--out", out, "output directory");
  run->add_option("--bin", bin, "throughput bin width in seconds")->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "run every strategy x seed cell and tabulate");
  add_common(compare);
  std::string strategies = "pipeline,full_copy_gpu";
  std::string seeds_text;
  int seed_count = 5;
  compare->add_option("--out", out, "output root; one subdirectory per cell");
  compare->add_option("--strategies", strategies, "comma-separated loading strategies");
  compare->add_option("--seeds", seeds_text, "comma-separated seeds (overrides --seed-count)");
  compare->add_option("--seed-count", seed_count, "seeds 1..N")->check(CLI::PositiveNumber);

  auto* plan = app.add_subcommand("plan", "print the loading plan and, given failed GPUs, the reassignment");
  add_common(plan);
  std::string fail_text;
  int loaded = 1;
  plan->add_option("--fail", fail_text, "comma-separated failed GPUs (default: GPUs named in faults)");
  plan->add_option("--loaded", loaded, "segments each GPU holds when the failure happens")->check(CLI::NonNegativeNumber);

  auto* validate = app.add_subcommand("validate", "check a scenario and report every problem");
  add_common(validate);
  bool defaults = false;
  validate->add_flag("--print-defaults", defaults, "print the full default configuration and exit");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return guarded([&] {
      const Scenario sc = load(config, overrides);
      const auto result = simulate(sc);
      const auto summary = summarize_run(result);
      const auto dir = output_root(sc, out);
      write_outputs(dir, result, summary, bin);
      std::cout << summary_line(result, summary) << "\n";
      return result.unrecoverable ? kExitInvariant : kExitOk;
    });
  }

  if (compare->parsed()) {
    return guarded([&] {
      const Scenario base = load(config, overrides);
      std::vector<std::uint64_t> seeds;
      if (!seeds_text.empty()) {
        for (const auto& s : split_csv(seeds_text)) seeds.push_back(std::stoull(s));
      } else {
        for (int i = 1; i <= seed_count; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
      }
      std::vector<LoadStrategy> strats;
      for (const auto& name : split_csv(strategies)) {
        auto s = parse_strategy(name);
        if (!s) throw ConfigError("unknown strategy '" + name + "'");
        strats.push_back(*s);
      }
      const auto root = output_root(base, out);
      fs::create_directories(root);
      std::ostringstream table;
      table << "strategy,seed,status,mean_ttft,mean_latency,p50_recovery,trace_hash\n";
      for (auto strategy : strats) {
        for (auto seed : seeds) {
          Scenario sc = base;
          sc.loading.strategy = strategy;
          sc.workload.seed = seed;
          table << to_string(strategy) << ',' << seed << ',';
          try {
            const auto result = simulate(sc);
            const auto summary = summarize_run(result);
            write_outputs(root / (std::string(to_string(strategy)) + "_seed" + std::to_string(seed)), result, summary);
            const auto rec = median_recovery(summary);
            table << (result.unrecoverable ? "unrecoverable" : "ok") << ','
                  << (summary.ttft.empty() ? "" : detail::fmt(summary.ttft.mean, 6)) << ','
                  << (summary.latency.empty() ? "" : detail::fmt(summary.latency.mean, 6)) << ','
                  << (rec ? detail::fmt(*rec, 6) : "") << ',' << result.trace_hash() << '\n';
          } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ';');
            table << "failed: " << msg << ",,,,\n";
          }
        }
      }
      detail::write_file(root / "compare.csv", table.str());
      std::cout << table.str();
      return kExitOk;
    });
  }

  if (plan->parsed()) {
    return guarded([&] {
      const Scenario sc = load(config, overrides);
      std::vector<int> failed;
      if (!fail_text.empty()) {
        for (const auto& s : split_csv(fail_text)) {
          try {
            failed.push_back(std::stoi(s));
          } catch (const std::exception&) {
            throw ConfigError("--fail expects GPU ids, got '" + s + "'");
          }
        }
        for (int g : failed)
          if (g < 0 || g >= sc.cluster.gpu_count)
            throw ConfigError("--fail gpu " + std::to_string(g) + " does not exist (gpu_count " +
                              std::to_string(sc.cluster.gpu_count) + ")");
      } else {
        for (const auto& f : sc.faults.events)
          if (std::find(failed.begin(), failed.end(), f.gpu_id) == failed.end()) failed.push_back(f.gpu_id);
      }
      std::cout << format_plan(sc, failed, loaded);
      std::set<int> distinct(failed.begin(), failed.end());
      return static_cast<int>(distinct.size()) >= sc.cluster.gpu_count ? kExitInvariant : kExitOk;
    });
  }

  if (validate->parsed()) {
    return guarded([&] {
      if (defaults) {
        std::cout << scenario_to_json(default_scenario()).dump(2) << "\n";
        return kExitOk;
      }
      const Scenario sc = load(config, overrides);
      std::cout << "ok: " << sc.name << " (scenario hash " << scenario_hash(sc) << ")\n";
      return kExitOk;
    });
  }
  return kExitOk;
}
