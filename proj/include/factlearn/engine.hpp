#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "factlearn/aggregate_map.hpp"
#include "factlearn/registry.hpp"
#include "factlearn/relational.hpp"

namespace factlearn {

struct EngineCounters {
  std::uint64_t values_scanned = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t aggregate_map_entries_total = 0;

  EngineCounters& operator+=(const EngineCounters& o) {
    values_scanned += o.values_scanned;
    cache_hits += o.cache_hits;
    cache_misses += o.cache_misses;
    aggregate_map_entries_total += o.aggregate_map_entries_total;
    return *this;
  }
};

struct EngineOptions {
  bool use_cache = true;
  unsigned threads = 1;  // >1 partitions the root values across workers
};

// Per-node snapshot of aggregate arrays, keyed by the values of dep(node).
class DepCache {
 public:
  using Context = std::vector<double>;
  using Arrays = std::vector<AggregateMap>;

  explicit DepCache(std::size_t nodes = 0) : per_node_(nodes) {}

  const Arrays* probe(int node, const Context& context) const;
  void record(int node, Context context, Arrays arrays);
  std::size_t size(int node) const { return per_node_[static_cast<std::size_t>(node)].size(); }
  std::size_t size() const;

 private:
  std::vector<std::map<Context, Arrays>> per_node_;
};

struct AggregateResult {
  std::vector<Monomial> monomials;  // root register order
  std::vector<AggregateMap> maps;   // raw sums, aligned with monomials
  EngineCounters counters;

  const AggregateMap& at(const Monomial& m) const;
  bool contains(const Monomial& m) const;
  // |D|: the root COUNT aggregate.
  double count() const { return at(Monomial{}).scalar(); }
};

// Requires relations sorted with sort_for_order.
AggregateResult compute_aggregates(const Database& db, const VariableOrder& order, const RegisterHierarchy& registers,
                                   const EngineOptions& options = {});

}  // namespace factlearn
