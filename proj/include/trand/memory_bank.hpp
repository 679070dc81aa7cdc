#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "trand/errors.hpp"
#include "trand/numerics.hpp"

namespace trand {

// Stored unit-norm embeddings of all N target samples, indexed 0..N-1.
class MemoryBank {
 public:
  MemoryBank() = default;

  MemoryBank(std::vector<Vec> entries, double momentum = 0.5)
      : entries_(std::move(entries)), momentum_(momentum) {
    if (!(momentum_ >= 0.0 && momentum_ < 1.0)) {
      throw ParameterError("MemoryBank: momentum must be in [0, 1)");
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (std::abs(norm(entries_[i]) - 1.0) > 1e-9) {
        throw ParameterError("MemoryBank: entry " + std::to_string(i) + " is not unit-norm");
      }
      if (entries_[i].size() != entries_.front().size()) {
        throw ParameterError("MemoryBank: entries differ in dimension");
      }
    }
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().size(); }
  double momentum() const { return momentum_; }
  const Vec& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Vec>& entries() const { return entries_; }

  // entry <- normalize(mu * old + (1 - mu) * fresh). A fresh value equal to
  // the stored one leaves the entry bit-identical.
  void update(std::size_t id, const Vec& fresh) {
    if (id >= entries_.size()) {
      throw ParameterError("MemoryBank::update: unknown sample id " + std::to_string(id));
    }
    Vec& old = entries_[id];
    require_same_dim(old, fresh, "MemoryBank::update");
    if (old == fresh) return;
    Vec mixed(old.size());
    for (std::size_t i = 0; i < old.size(); ++i) {
      mixed[i] = momentum_ * old[i] + (1.0 - momentum_) * fresh[i];
    }
    old = l2_normalize(mixed);
  }

  bool operator==(const MemoryBank&) const = default;

 private:
  std::vector<Vec> entries_;
  double momentum_ = 0.5;
};

}  // namespace trand
