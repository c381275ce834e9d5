#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/matrix.hpp"

namespace anchormi {

// Named, ordered set of trainable f64 tensors. Shapes are fixed at
// construction; one store is confined to one training run.
struct ParamStore {
  struct Entry {
    std::string name;
    Mat value;
  };

  std::vector<Entry> entries;
  std::uint64_t rng_seed = 0;

  int add(const std::string& name, Mat value) {
    entries.push_back({name, std::move(value)});
    return static_cast<int>(entries.size()) - 1;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return static_cast<int>(i);
    throw ContractError("ParamStore: no parameter named '" + name + "'");
  }

  Mat& at(const std::string& name) { return entries[index_of(name)].value; }
  const Mat& at(const std::string& name) const { return entries[index_of(name)].value; }

  std::size_t coord_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& e : entries)
      if (!e.value.allFinite()) return false;
    return true;
  }

  // The parameter (if any) holding a non-finite value, for diagnostics.
  std::string first_non_finite() const {
    for (const auto& e : entries)
      if (!e.value.allFinite()) return e.name;
    return {};
  }
};

// Gradients aligned with ParamStore::entries.
using GradList = std::vector<Mat>;

}  // namespace anchormi
