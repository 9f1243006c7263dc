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
#include <limits>
#include <stdexcept>
#include <string>

namespace coldpipe {

/// Simulated time in integer nanoseconds. All event ordering uses this type.
using Nanos = std::int64_t;

/// Byte counts. Signed so that differences never wrap.
using Bytes = std::int64_t;

inline constexpr Nanos kNanosPerSecond = 1'000'000'000;
inline constexpr Nanos kNever = std::numeric_limits<Nanos>::max();

inline constexpr Bytes KiB = 1024;
inline constexpr Bytes MiB = 1024 * KiB;
inline constexpr Bytes GiB = 1024 * MiB;
inline constexpr Bytes KB = 1000;
inline constexpr Bytes MB = 1000 * KB;
inline constexpr Bytes GB = 1000 * MB;

/// Rounds a duration in seconds to the nearest nanosecond.
inline Nanos to_nanos(double seconds) {
  return static_cast<Nanos>(std::llround(seconds * 1e9));
}

inline double to_seconds(Nanos ns) { return static_cast<double>(ns) * 1e-9; }

// Error taxonomy. Each maps to a distinct failure class in the CLI.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PartitionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A call made in a state where the protocol forbids it.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by the event loop when a runtime invariant audit fails.
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(const std::string& what, std::uint64_t event_index)
      : std::runtime_error(what + " (event #" + std::to_string(event_index) + ")"),
        event_index_(event_index) {}

  std::uint64_t event_index() const noexcept { return event_index_; }

 private:
  std::uint64_t event_index_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised by metric queries that need data the trace does not contain.
class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coldpipe
