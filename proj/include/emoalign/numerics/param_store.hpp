#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "emoalign/numerics/tensor.hpp"

namespace emoalign::numerics {

/// Named parameters, iterated in name order, plus the subset being trained.
class ParameterStore {
 public:
  /// Registers a new parameter. Throws ContractError on a duplicate name.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  const std::map<std::string, Tensor>& entries() const { return entries_; }

  /// Replaces the trainable set with the names accepted by `pred` and updates
  /// requires_grad on every entry to match.
  void set_trainable(const std::function<bool(const std::string&)>& pred);
  const std::set<std::string>& trainable() const { return trainable_; }
  bool is_trainable(const std::string& name) const { return trainable_.count(name) != 0; }

  /// Zero-filled gradients on trainable entries; others are cleared.
  void zero_grad();

  /// SHA-256 over (name, shape, raw value bytes) of the selected entries.
  std::string checksum(const std::function<bool(const std::string&)>& pred) const;
  std::string checksum() const;
  std::string checksum_of(const std::string& name) const;

  /// Deep copy of values; the copy has no trainable entries.
  ParameterStore clone() const;

 private:
  std::map<std::string, Tensor> entries_;
  std::set<std::string> trainable_;
};

}  // namespace emoalign::numerics
