#include "factlearn/engine.hpp"

#include <algorithm>
#include <thread>

#include "factlearn/errors.hpp"

namespace factlearn {

const DepCache::Arrays* DepCache::probe(int node, const Context& context) const {
  const auto& m = per_node_[static_cast<std::size_t>(node)];
  auto it = m.find(context);
  return it == m.end() ? nullptr : &it->second;
}

void DepCache::record(int node, Context context, Arrays arrays) {
  per_node_[static_cast<std::size_t>(node)].insert_or_assign(std::move(context), std::move(arrays));
}

std::size_t DepCache::size() const {
  std::size_t n = 0;
  for (const auto& m : per_node_) n += m.size();
  return n;
}

const AggregateMap& AggregateResult::at(const Monomial& m) const {
  auto it = std::lower_bound(monomials.begin(), monomials.end(), m);
  if (it == monomials.end() || !(*it == m)) throw Error("no aggregate computed for monomial " + m.to_string());
  return maps[static_cast<std::size_t>(it - monomials.begin())];
}

bool AggregateResult::contains(const Monomial& m) const {
  return std::binary_search(monomials.begin(), monomials.end(), m);
}

namespace {

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

struct Occurrence {
  std::size_t relation;
  std::size_t column;
};

class Worker {
 public:
  Worker(const Database& db, const VariableOrder& order, const RegisterHierarchy& registers, bool use_cache)
      : db_(db), order_(order), registers_(registers), use_cache_(use_cache), cache_(order.size()) {
    occurrences_.resize(order.size());
    completed_.resize(order.size());
    for (std::size_t r = 0; r < db.relations().size(); ++r) {
      const auto& rel = db.relations()[r];
      int deepest = -1;
      for (std::size_t c = 0; c < rel.arity(); ++c) {
        int x = order.index_of(rel.attributes()[c].name);
        occurrences_[static_cast<std::size_t>(x)].push_back({r, c});
        if (deepest < 0 || order.node(x).ancestors.size() > order.node(deepest).ancestors.size()) deepest = x;
      }
      if (deepest >= 0) completed_[static_cast<std::size_t>(deepest)].push_back(r);
      ranges_.push_back({0, rel.size()});
    }
    values_.assign(order.size(), 0.0);
    powers_.resize(order.size());
  }

  std::vector<Range>& ranges() { return ranges_; }
  EngineCounters& counters() { return counters_; }

  std::vector<AggregateMap> empty_arrays(int x) const {
    std::vector<AggregateMap> out;
    for (const auto& e : registers_.node(x).entries) out.emplace_back(e.key_arity);
    return out;
  }

  // Calls fn(a) for every value a of node x common to all relations containing x
  // within the current ranges; the ranges are narrowed to a during the call.
  template <typename Fn>
  void for_each_value(int x, Fn&& fn) {
    const auto& occ = occurrences_[static_cast<std::size_t>(x)];
    const std::size_t k = occ.size();
    std::vector<Range> saved(k);
    std::vector<std::size_t> lo(k), hi(k);
    for (std::size_t i = 0; i < k; ++i) {
      saved[i] = ranges_[occ[i].relation];
      lo[i] = saved[i].lo;
      hi[i] = saved[i].hi;
      if (lo[i] >= hi[i]) return;
    }
    auto cell = [&](std::size_t i, std::size_t row) { return db_.relations()[occ[i].relation].at(row, occ[i].column); };

    double candidate = cell(0, lo[0]);
    for (std::size_t i = 1; i < k; ++i) candidate = std::max(candidate, cell(i, lo[i]));
    while (true) {
      bool aligned = true;
      for (std::size_t i = 0; i < k; ++i) {
        lo[i] = seek(i, occ, lo[i], hi[i], candidate, false);
        if (lo[i] == hi[i]) {
          for (std::size_t j = 0; j < k; ++j) ranges_[occ[j].relation] = saved[j];
          return;
        }
        double v = cell(i, lo[i]);
        if (v > candidate) {
          candidate = v;
          aligned = false;
          break;
        }
      }
      if (!aligned) continue;
      std::vector<std::size_t> end(k);
      for (std::size_t i = 0; i < k; ++i) {
        end[i] = seek(i, occ, lo[i], hi[i], candidate, true);
        ranges_[occ[i].relation] = {lo[i], end[i]};
      }
      fn(candidate);
      bool exhausted = false;
      double next = candidate;
      for (std::size_t i = 0; i < k; ++i) {
        lo[i] = end[i];
        if (lo[i] == hi[i]) {
          exhausted = true;
          break;
        }
        next = i == 0 ? cell(i, lo[i]) : std::max(next, cell(i, lo[i]));
      }
      if (exhausted) break;
      candidate = next;
    }
    for (std::size_t i = 0; i < k; ++i) ranges_[occ[i].relation] = saved[i];
  }

  // Adds the contribution of value a of node x (ranges already narrowed) to result.
  void process_value(int x, double a, std::vector<AggregateMap>& result) {
    ++counters_.values_scanned;
    values_[static_cast<std::size_t>(x)] = a;
    // Relations whose attributes are all bound here: their narrowed range holds
    // copies of one tuple, each a separate row of the join.
    double multiplicity = 1.0;
    for (std::size_t r : completed_[static_cast<std::size_t>(x)])
      multiplicity *= static_cast<double>(ranges_[r].hi - ranges_[r].lo);
    const auto& node = order_.node(x);
    const auto& reg = registers_.node(x);
    auto& pw = powers_[static_cast<std::size_t>(x)];
    pw.assign(static_cast<std::size_t>(reg.max_exponent) + 1, 1.0);
    bool categorical = node.kind == AttributeKind::Categorical;
    if (!categorical)
      for (std::size_t e = 1; e < pw.size(); ++e) pw[e] = pw[e - 1] * a;

    std::vector<std::vector<AggregateMap>> child_results;
    child_results.reserve(node.children.size());
    for (int c : node.children) {
      child_results.push_back(visit_child(c));
      if (child_results.back()[0].empty()) return;
    }

    Key key;
    for (std::size_t l = 0; l < reg.entries.size(); ++l) {
      const auto& e = reg.entries[l];
      key.clear();
      double local = multiplicity;
      if (e.local_exponent > 0) {
        if (categorical)
          key.push_back(static_cast<CategoryId>(a));
        else
          local *= pw[static_cast<std::size_t>(e.local_exponent)];
      }
      accumulate(result[l], key, local, child_results, e, 0);
    }
  }

  std::vector<AggregateMap> compute(int x) {
    auto result = empty_arrays(x);
    for_each_value(x, [&](double a) { process_value(x, a, result); });
    return result;
  }

 private:
  std::size_t seek(std::size_t i, const std::vector<Occurrence>& occ, std::size_t lo, std::size_t hi, double target,
                   bool strict) const {
    const Relation& rel = db_.relations()[occ[i].relation];
    const std::size_t col = occ[i].column;
    auto before = [&](std::size_t row) {
      double v = rel.at(row, col);
      return strict ? v <= target : v < target;
    };
    if (lo >= hi || !before(lo)) return lo;
    // Galloping: find a bracket [lo + step/2, lo + step) then binary search.
    std::size_t step = 1;
    std::size_t prev = lo;
    while (lo + step < hi && before(lo + step)) {
      prev = lo + step;
      step *= 2;
    }
    std::size_t left = prev + 1, right = std::min(hi, lo + step);
    while (left < right) {
      std::size_t mid = left + (right - left) / 2;
      if (before(mid))
        left = mid + 1;
      else
        right = mid;
    }
    return left;
  }

  std::vector<AggregateMap> visit_child(int c) {
    if (!use_cache_ || !order_.cacheable(c)) return compute(c);
    DepCache::Context context;
    for (int d : order_.node(c).dependencies) context.push_back(values_[static_cast<std::size_t>(d)]);
    if (const auto* hit = cache_.probe(c, context)) {
      ++counters_.cache_hits;
      return *hit;
    }
    ++counters_.cache_misses;
    auto result = compute(c);
    cache_.record(c, std::move(context), result);
    return result;
  }

  void accumulate(AggregateMap& dst, Key& key, double value, const std::vector<std::vector<AggregateMap>>& children,
                  const RegisterEntry& e, std::size_t c) {
    if (c == children.size()) {
      dst.add(key, value);
      return;
    }
    const AggregateMap& m = children[c][e.children[c]];
    std::size_t base = key.size();
    for (const auto& [k, p] : m) {
      key.insert(key.end(), k.begin(), k.end());
      accumulate(dst, key, value * p, children, e, c + 1);
      key.resize(base);
    }
  }

  const Database& db_;
  const VariableOrder& order_;
  const RegisterHierarchy& registers_;
  bool use_cache_;
  DepCache cache_;
  EngineCounters counters_;
  std::vector<std::vector<Occurrence>> occurrences_;
  std::vector<std::vector<std::size_t>> completed_;  // per node
  std::vector<Range> ranges_;
  std::vector<double> values_;
  std::vector<std::vector<double>> powers_;
};

}  // namespace

AggregateResult compute_aggregates(const Database& db, const VariableOrder& order, const RegisterHierarchy& registers,
                                   const EngineOptions& options) {
  for (const auto& rel : db.relations())
    if (!is_sorted_for_order(rel, order))
      throw SchemaError("relation " + rel.name() + " is not sorted for the variable order");
  if (registers.nodes().size() != order.size()) throw SchemaError("registers were built for a different order");

  AggregateResult result;
  for (const auto& e : registers.root().entries) result.monomials.push_back(e.monomial);

  if (options.threads <= 1) {
    Worker w(db, order, registers, options.use_cache);
    result.maps = w.compute(0);
    result.counters = w.counters();
  } else {
    // Collect root values with their narrowed ranges, then split them into
    // contiguous chunks; chunks are merged in order so sums are reproducible.
    Worker scout(db, order, registers, options.use_cache);
    std::vector<std::pair<double, std::vector<Range>>> roots;
    scout.for_each_value(0, [&](double a) { roots.emplace_back(a, scout.ranges()); });
    std::size_t parts = std::min<std::size_t>(options.threads, std::max<std::size_t>(roots.size(), 1));
    std::vector<std::vector<AggregateMap>> partial(parts);
    std::vector<EngineCounters> counters(parts);
    std::vector<std::thread> threads;
    for (std::size_t p = 0; p < parts; ++p) {
      threads.emplace_back([&, p] {
        Worker w(db, order, registers, options.use_cache);
        partial[p] = w.empty_arrays(0);
        std::size_t begin = roots.size() * p / parts, end = roots.size() * (p + 1) / parts;
        for (std::size_t i = begin; i < end; ++i) {
          w.ranges() = roots[i].second;
          w.process_value(0, roots[i].first, partial[p]);
        }
        counters[p] = w.counters();
      });
    }
    for (auto& t : threads) t.join();
    result.maps = Worker(db, order, registers, false).empty_arrays(0);
    for (std::size_t p = 0; p < parts; ++p) {
      for (std::size_t l = 0; l < result.maps.size(); ++l) result.maps[l].merge_add(partial[p][l]);
      result.counters += counters[p];
    }
  }
  for (const auto& m : result.maps) result.counters.aggregate_map_entries_total += m.size();
  return result;
}

}  // namespace factlearn
