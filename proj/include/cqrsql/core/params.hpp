#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cqrsql/core/tensor.hpp"

namespace cqrsql {

/// Named parameter tensors. Iteration order is the lexicographic name order,
/// which makes every traversal (optimizer, checkpoint, grad check) stable.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Creates a parameter drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)],
  /// fan_in being the row count. Returns the existing entry when the name is
  /// already registered with the same shape.
  Tensor& create(const std::string& name, std::vector<std::size_t> shape, bool trainable = true) {
    if (auto it = entries_.find(name); it != entries_.end()) {
      if (it->second.value.shape() != shape)
        throw NumericError("parameter '" + name + "' re-created with shape " + shape_str(shape) +
                           ", existing " + shape_str(it->second.value.shape()));
      return it->second.value;
    }
    Tensor t(shape);
    const Real fan_in = static_cast<Real>(shape.size() > 1 ? shape[0] : shape.back());
    const Real bound = 1.0 / std::sqrt(std::max<Real>(fan_in, 1));
    std::uniform_real_distribution<Real> dist(-bound, bound);
    for (auto& v : t.data()) v = dist(rng_);
    auto [it, _] = entries_.emplace(name, Entry{std::move(t), trainable});
    return it->second.value;
  }

  /// Creates a parameter with a constant fill (layer-norm gains, biases).
  Tensor& create_constant(const std::string& name, std::vector<std::size_t> shape, Real fill,
                          bool trainable = true) {
    if (auto it = entries_.find(name); it != entries_.end()) {
      if (it->second.value.shape() != shape)
        throw NumericError("parameter '" + name + "' re-created with different shape");
      return it->second.value;
    }
    auto [it, _] = entries_.emplace(name, Entry{Tensor(std::move(shape), fill), trainable});
    return it->second.value;
  }

  /// Inserts a tensor verbatim (checkpoint loading).
  void insert(const std::string& name, Tensor value, bool trainable = true) {
    if (entries_.count(name)) throw NumericError("duplicate parameter '" + name + "'");
    entries_.emplace(name, Entry{std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  const Tensor& get(const std::string& name) const { return entry(name).value; }
  Tensor& get(const std::string& name) { return entry(name).value; }

  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw NumericError("unknown parameter '" + name + "'");
    return it->second;
  }
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw NumericError("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
      if (ia->first != ib->first || !(ia->second.value == ib->second.value) ||
          ia->second.trainable != ib->second.trainable)
        return false;
    }
    return true;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<std::string, Entry> entries_;
};

/// Gradients keyed by parameter name; same ordering as ParamStore.
using GradMap = std::map<std::string, Tensor>;

}  // namespace cqrsql
