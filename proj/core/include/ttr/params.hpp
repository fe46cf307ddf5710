// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ttr/autodiff.hpp"

namespace ttr {

/// Named parameter tensors with parallel gradient slots and frozen flags.
/// Iteration order is insertion order everywhere, so updates and serialization
/// are deterministic.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Matrix value;
    ad::Matrix grad;
    bool frozen = false;
  };

  /// Registers a tensor; throws on duplicate names.
  Entry& add(const std::string& name, ad::Matrix init, bool frozen = false);

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grads();
  void scale_grads(double s);
  void freeze_all(bool frozen);

  /// Total number of scalar parameters.
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Binary checkpoint: magic+version, module name, tensor table (name, rows,
/// cols), then row-major 64-bit little-endian values. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const std::string& module_name,
                     const ParamStore& store);

struct Checkpoint {
  std::string module_name;
  ParamStore store;
};

Checkpoint load_checkpoint(const std::string& path);

/// Loads checkpoint values into an existing store. Shapes and the name set
/// must match exactly.
void load_checkpoint_into(const std::string& path, const std::string& expected_module,
                          ParamStore& store);

}  // namespace ttr
