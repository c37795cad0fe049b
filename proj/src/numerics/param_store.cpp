#include "emoalign/numerics/param_store.hpp"

#include <cstring>

#include "emoalign/errors.hpp"
#include "emoalign/numerics/digest.hpp"

namespace emoalign::numerics {

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  if (!value.defined()) throw ContractError("parameter '" + name + "' is undefined");
  auto [it, inserted] = entries_.emplace(name, std::move(value));
  if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
  it->second.set_requires_grad(false);
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParameterStore::set_trainable(const std::function<bool(const std::string&)>& pred) {
  trainable_.clear();
  for (auto& [name, t] : entries_) {
    const bool on = pred(name);
    t.set_requires_grad(on);
    if (on) trainable_.insert(name);
    else t.clear_grad();
  }
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) {
    if (trainable_.count(name)) t.zero_grad();
    else t.clear_grad();
  }
}

std::string ParameterStore::checksum(const std::function<bool(const std::string&)>& pred) const {
  std::vector<unsigned char> bytes;
  for (const auto& [name, t] : entries_) {
    if (!pred(name)) continue;
    bytes.insert(bytes.end(), name.begin(), name.end());
    bytes.push_back(0);
    for (auto d : t.shape()) {
      const auto v = static_cast<std::uint64_t>(d);
      const auto* p = reinterpret_cast<const unsigned char*>(&v);
      bytes.insert(bytes.end(), p, p + sizeof v);
    }
    const auto data = t.data();
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    bytes.insert(bytes.end(), p, p + data.size_bytes());
  }
  return sha256_hex(bytes);
}

std::string ParameterStore::checksum() const {
  return checksum([](const std::string&) { return true; });
}

std::string ParameterStore::checksum_of(const std::string& name) const {
  get(name);
  return checksum([&](const std::string& n) { return n == name; });
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone(false));
  return out;
}

}  // namespace emoalign::numerics
