// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "evomerge/errors.hpp"

namespace evomerge {

/// A dense f32 tensor, row-major. An empty shape denotes a scalar (1 element).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  bool operator==(const Tensor&) const = default;
};

/// Ordered collection of named f32 tensors plus optional string metadata.
/// Iteration order is lexicographic by name (std::map). Immutable by
/// convention once fully constructed; safe to share across threads.
class TensorMap {
 public:
  using Entries = std::map<std::string, Tensor>;
  using Metadata = std::map<std::string, std::string>;

  TensorMap() = default;

  void set(const std::string& name, Tensor tensor) {
    if (tensor.numel() != static_cast<std::int64_t>(tensor.data.size())) {
      throw FormatError("tensor '" + name + "': data length " +
                        std::to_string(tensor.data.size()) +
                        " does not match shape product " +
                        std::to_string(tensor.numel()));
    }
    entries_[name] = std::move(tensor);
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw AlignmentError("missing tensor '" + name + "'");
    return it->second;
  }

  const Entries& entries() const { return entries_; }
  Metadata& metadata() { return metadata_; }
  const Metadata& metadata() const { return metadata_; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  /// Throws FormatError naming the first tensor containing NaN/Inf.
  void check_finite() const {
    for (const auto& [name, t] : entries_) {
      for (float v : t.data) {
        if (!std::isfinite(v)) {
          throw FormatError("tensor '" + name + "' contains non-finite values");
        }
      }
    }
  }

  bool operator==(const TensorMap&) const = default;

 private:
  Entries entries_;
  Metadata metadata_;
};

/// Glob match with `*` (any run) and `?` (one char). `**` behaves the same as
/// `*`: tensor names are flat identifiers, not paths.
inline bool glob_match(const std::string& pattern, const std::string& text) {
  std::size_t p = 0, t = 0;
  std::size_t star_p = std::string::npos, star_t = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star_p = p++;
      star_t = t;
    } else if (star_p != std::string::npos) {
      p = star_p + 1;
      t = ++star_t;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

/// Selects tensor names for the merge domain: a name passes iff it matches at
/// least one include glob (empty include list matches everything) and no
/// exclude glob.
struct KeyFilter {
  std::vector<std::string> include_globs;
  std::vector<std::string> exclude_globs;

  bool selects(const std::string& name) const {
    bool included = include_globs.empty();
    for (const auto& g : include_globs) {
      if (glob_match(g, name)) {
        included = true;
        break;
      }
    }
    if (!included) return false;
    for (const auto& g : exclude_globs) {
      if (glob_match(g, name)) return false;
    }
    return true;
  }
};

/// Returns the filtered name list, verifying that every map holds every
/// selected name with an identical shape. The result is the merge domain.
inline std::vector<std::string> aligned_keys(
    const std::vector<const TensorMap*>& maps, const KeyFilter& filter = {}) {
  if (maps.empty()) throw AlignmentError("aligned_keys: no maps given");
  std::vector<std::string> keys;
  for (const auto& [name, t] : maps[0]->entries()) {
    if (filter.selects(name)) keys.push_back(name);
  }
  for (std::size_t i = 1; i < maps.size(); ++i) {
    for (const auto& key : keys) {
      if (!maps[i]->has(key)) {
        throw AlignmentError("map " + std::to_string(i) + " is missing key '" +
                             key + "'");
      }
      if (maps[i]->at(key).shape != maps[0]->at(key).shape) {
        throw AlignmentError("map " + std::to_string(i) +
                             " has mismatched shape for key '" + key + "'");
      }
    }
    // keys selected in other maps must also exist in map 0
    for (const auto& [name, t] : maps[i]->entries()) {
      if (filter.selects(name) && !maps[0]->has(name)) {
        throw AlignmentError("map 0 is missing key '" + name + "'");
      }
    }
  }
  return keys;
}

/// Total element count over a list of domain keys.
inline std::int64_t domain_numel(const TensorMap& map,
                                 const std::vector<std::string>& keys) {
  std::int64_t n = 0;
  for (const auto& k : keys) n += map.at(k).numel();
  return n;
}

}  // namespace evomerge
