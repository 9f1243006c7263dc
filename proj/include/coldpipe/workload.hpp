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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coldpipe/common.hpp"
#include "coldpipe/request.hpp"

namespace coldpipe {

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for one concern ("arrivals", "prompts", ...), so that
/// changing one distribution leaves the others untouched.
inline std::mt19937_64 labeled_stream(std::uint64_t master_seed, std::string_view label) {
  return std::mt19937_64(splitmix64(master_seed ^ fnv1a64(label)));
}

enum class ArrivalKind { Poisson, Burst, TraceFile };

struct LengthDistribution {
  enum class Kind { Fixed, LogNormal } kind = Kind::Fixed;
  std::int64_t fixed = 64;
  double mu = 4.0;     // of the underlying normal
  double sigma = 0.5;
  std::int64_t min = 1;
  std::int64_t max = 4096;

  static LengthDistribution constant(std::int64_t n) {
    LengthDistribution d;
    d.fixed = n;
    return d;
  }

  template <class Rng>
  std::int64_t sample(Rng& rng) const {
    if (kind == Kind::Fixed) return fixed;
    std::lognormal_distribution<double> dist(mu, sigma);
    return std::clamp<std::int64_t>(std::llround(dist(rng)), min, max);
  }
};

struct WorkloadSpec {
  ArrivalKind arrival = ArrivalKind::Burst;
  double rate = 0.0;        // requests/second, Poisson
  std::int64_t count = 64;  // Burst
  std::string trace_path;
  LengthDistribution prompt = LengthDistribution::constant(64);
  LengthDistribution max_new_tokens = LengthDistribution::constant(16);
  double adapter_switch_probability = 0.0;
  double duration = 10.0;
  std::uint64_t seed = 1;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (!(rate >= 0.0)) errors.emplace_back("workload.rate must be >= 0");
    if (count < 0) errors.emplace_back("workload.count must be >= 0");
    if (!(adapter_switch_probability >= 0.0 && adapter_switch_probability <= 1.0))
      errors.emplace_back("workload.adapter_switch_probability must be in [0, 1]");
    if (!(duration >= 0.0)) errors.emplace_back("workload.duration must be >= 0");
    if (arrival == ArrivalKind::TraceFile && trace_path.empty())
      errors.emplace_back("workload.trace_path is required for trace arrivals");
    for (const auto* d : {&prompt, &max_new_tokens}) {
      if (d->kind == LengthDistribution::Kind::Fixed && d->fixed < 1)
        errors.emplace_back("workload lengths must be >= 1");
      if (d->kind == LengthDistribution::Kind::LogNormal && (!(d->sigma >= 0.0) || d->min < 1 || d->max < d->min))
        errors.emplace_back("workload lognormal length needs sigma >= 0 and 1 <= min <= max");
    }
    return errors;
  }
};

/// Parses the trace workload format: one request per line,
/// `arrival_time_ns prompt_tokens max_new_tokens adapter_id`, separated by
/// commas or whitespace. `-` or a missing adapter means the base model.
/// Blank lines and lines starting with '#' are skipped.
inline std::vector<Request> parse_trace_workload(std::istream& in) {
  std::vector<Request> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first) || first[0] == '#') continue;
    Request r;
    try {
      std::size_t used = 0;
      r.arrival_time = std::stoll(first, &used);
      if (used != first.size()) throw std::invalid_argument(first);
    } catch (const std::exception&) {
      throw ParseError("bad arrival time '" + first + "'", line_no);
    }
    std::string prompt, max_new, adapter;
    if (!(fields >> prompt >> max_new)) throw ParseError("expected 4 fields", line_no);
    fields >> adapter;
    std::string extra;
    if (fields >> extra) throw ParseError("unexpected field '" + extra + "'", line_no);
    auto parse_count = [&](const std::string& s, const char* what) {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size() || v < 1) throw std::invalid_argument(s);
        return static_cast<std::int64_t>(v);
      } catch (const std::exception&) {
        throw ParseError(std::string("bad ") + what + " '" + s + "'", line_no);
      }
    };
    if (r.arrival_time < 0) throw ParseError("negative arrival time", line_no);
    r.prompt_tokens = parse_count(prompt, "prompt_tokens");
    r.max_new_tokens = parse_count(max_new, "max_new_tokens");
    r.adapter_id = adapter == "-" ? "" : adapter;
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Request& a, const Request& b) { return a.arrival_time < b.arrival_time; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].request_id = static_cast<RequestId>(i);
  return out;
}

/// Reproducible request list sorted by arrival time, ids 0..n-1.
/// Adapters follow a switching chain: each request keeps the previous
/// request's adapter unless a switch (probability p) picks another one.
inline std::vector<Request> generate_workload(const WorkloadSpec& spec, const std::vector<std::string>& adapters) {
  std::vector<Request> out;
  if (spec.arrival == ArrivalKind::TraceFile) {
    std::ifstream in(spec.trace_path);
    if (!in) throw ConfigError("cannot open workload trace '" + spec.trace_path + "'");
    return parse_trace_workload(in);
  }
  auto arrivals = labeled_stream(spec.seed, "arrivals");
  auto prompts = labeled_stream(spec.seed, "prompts");
  auto outputs = labeled_stream(spec.seed, "outputs");
  auto adapter_rng = labeled_stream(spec.seed, "adapters");

  std::vector<Nanos> times;
  if (spec.arrival == ArrivalKind::Burst) {
    times.assign(static_cast<std::size_t>(spec.count), 0);
  } else if (spec.rate > 0.0) {
    std::exponential_distribution<double> gap(spec.rate);
    double t = gap(arrivals);
    while (t < spec.duration) {
      times.push_back(to_nanos(t));
      t += gap(arrivals);
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::string current;
  for (std::size_t i = 0; i < times.size(); ++i) {
    Request r;
    r.request_id = static_cast<RequestId>(i);
    r.arrival_time = times[i];
    r.prompt_tokens = spec.prompt.sample(prompts);
    r.max_new_tokens = spec.max_new_tokens.sample(outputs);
    if (!adapters.empty()) {
      if (i == 0) {
        current = adapters.front();
      } else if (adapters.size() > 1 && unit(adapter_rng) < spec.adapter_switch_probability) {
        std::uniform_int_distribution<std::size_t> pick(0, adapters.size() - 2);
        std::size_t k = pick(adapter_rng);
        const auto cur = static_cast<std::size_t>(std::find(adapters.begin(), adapters.end(), current) - adapters.begin());
        if (k >= cur) ++k;
        current = adapters[k];
      }
      r.adapter_id = current;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace coldpipe
