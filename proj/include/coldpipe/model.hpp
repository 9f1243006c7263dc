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
#include <optional>
#include <string>
#include <vector>

#include "coldpipe/common.hpp"

namespace coldpipe {

enum class CheckpointLocation { Ssd, Dram };

/// Half-open range of layer indices.
struct LayerRange {
  int start = 0;
  int end = 0;

  int size() const { return end - start; }
  bool empty() const { return end <= start; }
  bool contains(int layer) const { return layer >= start && layer < end; }
  bool contains(const LayerRange& other) const { return other.start >= start && other.end <= end; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

struct ModelSpec {
  std::string model_id = "model";
  int layer_count = 32;
  Bytes bytes_per_layer = 0;
  // Embeddings go to the first layer, the head to the last.
  Bytes extra_bytes = 0;
  CheckpointLocation checkpoint_location = CheckpointLocation::Dram;

  Bytes total_bytes() const { return static_cast<Bytes>(layer_count) * bytes_per_layer + extra_bytes; }

  Bytes layer_bytes(int layer) const {
    Bytes b = bytes_per_layer;
    if (layer == 0) b += extra_bytes / 2;
    if (layer == layer_count - 1) b += extra_bytes - extra_bytes / 2;
    return b;
  }

  Bytes range_bytes(LayerRange r) const {
    if (r.empty()) return 0;
    Bytes b = static_cast<Bytes>(r.size()) * bytes_per_layer;
    if (r.contains(0)) b += extra_bytes / 2;
    if (r.contains(layer_count - 1)) b += extra_bytes - extra_bytes / 2;
    return b;
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (model_id.empty()) errors.emplace_back("model.model_id must not be empty");
    if (layer_count < 1) errors.emplace_back("model.layer_count must be >= 1");
    if (bytes_per_layer < 0) errors.emplace_back("model.bytes_per_layer must be >= 0");
    if (extra_bytes < 0) errors.emplace_back("model.extra_bytes must be >= 0");
    if (layer_count >= 1 && total_bytes() <= 0) errors.emplace_back("model total size must be > 0");
    return errors;
  }
};

struct AdapterSpec {
  std::string adapter_id;
  std::string base_model_id;
  double size_fraction = 1e-4;

  Bytes total_bytes(const ModelSpec& base) const {
    return static_cast<Bytes>(std::llround(size_fraction * static_cast<double>(base.total_bytes())));
  }

  /// Bytes of the adapter slice covering `r`, split proportionally by layer
  /// count. Slices of a partition sum exactly to total_bytes().
  Bytes range_bytes(const ModelSpec& base, LayerRange r) const {
    const Bytes total = total_bytes(base);
    const auto cut = [&](int layer) {
      const Bytes q = total / base.layer_count;
      const Bytes rem = total % base.layer_count;
      return q * layer + (rem * layer) / base.layer_count;
    };
    return cut(r.end) - cut(r.start);
  }
};

struct Segment {
  int segment_id = 0;
  LayerRange layers;
  Bytes bytes = 0;
};

/// Splits the model into `parts` contiguous layer-balanced segments. Sizes
/// differ by at most one layer; lower-index segments take the remainder.
inline std::vector<Segment> partition_model(const ModelSpec& model, int parts) {
  if (parts < 1) throw PartitionError("partition_model: parts must be >= 1");
  if (parts > model.layer_count)
    throw PartitionError("partition_model: " + std::to_string(parts) + " parts exceed " +
                         std::to_string(model.layer_count) + " layers");
  std::vector<Segment> segments;
  segments.reserve(static_cast<std::size_t>(parts));
  const int base = model.layer_count / parts;
  const int remainder = model.layer_count % parts;
  int start = 0;
  for (int i = 0; i < parts; ++i) {
    const int size = base + (i < remainder ? 1 : 0);
    LayerRange r{start, start + size};
    segments.push_back(Segment{i, r, model.range_bytes(r)});
    start += size;
  }
  return segments;
}

/// Published parameter counts, fp16 (2 bytes per parameter).
struct CatalogEntry {
  const char* id;
  int layers;
  double total_params;
  double embedding_params;  // input embeddings plus any untied output head
};

inline const std::vector<CatalogEntry>& bundled_catalog() {
  static const std::vector<CatalogEntry> entries = {
      {"opt-1.3b", 24, 1.316e9, 50272.0 * 2048},
      {"opt-2.7b", 32, 2.651e9, 50272.0 * 2560},
      {"opt-6.7b", 32, 6.658e9, 50272.0 * 4096},
      {"opt-13b", 40, 12.853e9, 50272.0 * 5120},
      {"falcon-7b", 32, 6.922e9, 65024.0 * 4544},
      {"mistral-7b", 32, 7.242e9, 2.0 * 32000.0 * 4096},
  };
  return entries;
}

inline std::optional<ModelSpec> catalog_model(const std::string& id) {
  for (const auto& e : bundled_catalog()) {
    if (id != e.id) continue;
    ModelSpec m;
    m.model_id = e.id;
    m.layer_count = e.layers;
    m.extra_bytes = static_cast<Bytes>(std::llround(e.embedding_params * 2.0));
    const auto total = static_cast<Bytes>(std::llround(e.total_params * 2.0));
    m.bytes_per_layer = (total - m.extra_bytes) / e.layers;
    return m;
  }
  return std::nullopt;
}

}  // namespace coldpipe
