#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "factlearn/relational.hpp"

namespace factlearn {

// Group-by key: category ids of the monomial's categorical variables in
// variable-order (pre-order) position.
using Key = std::vector<CategoryId>;

class AggregateMap {
 public:
  using Storage = std::map<Key, double>;

  explicit AggregateMap(std::size_t arity = 0) : arity_(arity) {}

  std::size_t arity() const { return arity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void add(const Key& key, double value) { entries_[key] += value; }
  void add(Key&& key, double value) { entries_[std::move(key)] += value; }

  std::optional<double> find(const Key& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  // Value of the key, or zero when absent.
  double get(const Key& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0.0 : it->second;
  }
  // Value of the empty key (scalar aggregates).
  double scalar() const { return get(Key{}); }

  Storage::const_iterator begin() const { return entries_.begin(); }
  Storage::const_iterator end() const { return entries_.end(); }
  const Storage& entries() const { return entries_; }

  AggregateMap scaled(double factor) const {
    AggregateMap out(arity_);
    for (const auto& [k, v] : entries_) out.entries_.emplace_hint(out.entries_.end(), k, v * factor);
    return out;
  }

  void merge_add(const AggregateMap& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] += v;
  }

  friend bool operator==(const AggregateMap& a, const AggregateMap& b) {
    return a.arity_ == b.arity_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t arity_ = 0;
  Storage entries_;
};

}  // namespace factlearn
