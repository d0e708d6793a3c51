#include "factlearn/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "factlearn/errors.hpp"

namespace factlearn {

using nlohmann::json;

ModelSpec JobConfig::model() const {
  ModelSpec m;
  m.kind = kind;
  m.rank = rank;
  m.features = features;
  m.label = label;
  m.lambda = lambda;
  return m;
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  // Line of the first occurrence of "name" as a key; 0 when absent.
  int line_of(const std::string& name) const {
    auto pos = text_.find("\"" + name + "\"");
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
  }

  [[noreturn]] void fail(const std::string& message, const std::string& near) const {
    throw ConfigError(message, line_of(near));
  }

  const json& member(const json& obj, const std::string& key) const {
    if (!obj.is_object()) fail("expected an object holding '" + key + "'", key);
    auto it = obj.find(key);
    if (it == obj.end()) fail("missing key '" + key + "'", key);
    return *it;
  }

  std::string string(const json& v, const std::string& key) const {
    if (!v.is_string()) fail("'" + key + "' must be a string", key);
    return v.get<std::string>();
  }

  std::vector<std::string> strings(const json& v, const std::string& key) const {
    if (!v.is_array()) fail("'" + key + "' must be an array of strings", key);
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(string(e, key));
    return out;
  }

  double number(const json& v, const std::string& key) const {
    if (!v.is_number()) fail("'" + key + "' must be a number", key);
    return v.get<double>();
  }

  long long integer(const json& v, const std::string& key) const {
    if (!v.is_number_integer()) fail("'" + key + "' must be an integer", key);
    return v.get<long long>();
  }

  OrderSpec order(const json& v) const {
    OrderSpec spec;
    spec.variable = string(member(v, "var"), "var");
    if (auto it = v.find("children"); it != v.end()) {
      if (!it->is_array()) fail("'children' must be an array", "children");
      for (const auto& c : *it) spec.children.push_back(order(c));
    }
    if (auto it = v.find("dep"); it != v.end()) spec.dependencies = strings(*it, "dep");
    return spec;
  }

 private:
  const std::string& text_;
};

AttributeKind parse_kind(const Parser& p, const std::string& s) {
  if (s == "continuous") return AttributeKind::Continuous;
  if (s == "categorical") return AttributeKind::Categorical;
  p.fail("unknown attribute kind '" + s + "'", s);
}

ModelKind parse_model(const Parser& p, const std::string& s) {
  if (s == "lr") return ModelKind::Linear;
  if (s == "pr2") return ModelKind::Polynomial2;
  if (s == "fama") return ModelKind::Factorization;
  p.fail("unknown model kind '" + s + "' (expected lr, pr2 or fama)", s);
}

void collect(const OrderSpec& spec, std::vector<std::string>& out) {
  out.push_back(spec.variable);
  for (const auto& c : spec.children) collect(c, out);
}

}  // namespace

JobConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t byte = std::min(e.byte, text.size());
    int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
    throw ConfigError(std::string("malformed JSON: ") + e.what(), line);
  }
  Parser p(text);
  JobConfig cfg;

  const auto& rels = p.member(doc, "relations");
  if (!rels.is_array() || rels.empty()) p.fail("'relations' must be a non-empty array", "relations");
  for (const auto& r : rels) {
    RelationConfig rc;
    rc.name = p.string(p.member(r, "name"), "name");
    std::filesystem::path path = p.string(p.member(r, "path"), "path");
    rc.path = path.is_absolute() ? path : base_dir / path;
    const auto& attrs = p.member(r, "attributes");
    if (!attrs.is_array()) p.fail("'attributes' must be an array", "attributes");
    for (const auto& a : attrs) {
      Attribute at;
      at.name = p.string(p.member(a, "name"), "name");
      at.kind = parse_kind(p, p.string(p.member(a, "kind"), "kind"));
      rc.attributes.push_back(std::move(at));
    }
    cfg.relations.push_back(std::move(rc));
  }

  cfg.order = p.order(p.member(doc, "variable_order"));

  const auto& feats = p.member(doc, "features");
  if (auto it = feats.find("continuous"); it != feats.end())
    for (const auto& f : p.strings(*it, "continuous")) cfg.features.push_back({f, AttributeKind::Continuous});
  if (auto it = feats.find("categorical"); it != feats.end())
    for (const auto& f : p.strings(*it, "categorical")) cfg.features.push_back({f, AttributeKind::Categorical});

  if (auto it = doc.find("label"); it != doc.end() && !it->is_null()) cfg.label = p.string(*it, "label");

  if (auto it = doc.find("model"); it != doc.end()) {
    cfg.kind = parse_model(p, p.string(p.member(*it, "kind"), "kind"));
    if (auto r = it->find("rank"); r != it->end()) cfg.rank = static_cast<int>(p.integer(*r, "rank"));
    if (cfg.kind == ModelKind::Factorization && cfg.rank < 1) p.fail("factorization machines need rank >= 1", "rank");
  }
  if (auto it = doc.find("lambda"); it != doc.end()) {
    cfg.lambda = p.number(*it, "lambda");
    if (cfg.lambda < 0) p.fail("'lambda' must be non-negative", "lambda");
  }

  if (auto it = doc.find("solver"); it != doc.end()) {
    if (!it->is_object()) p.fail("'solver' must be an object", "solver");
    for (const auto& [key, v] : it->items()) {
      if (key == "max_iters")
        cfg.solver.max_iters = static_cast<int>(p.integer(v, key));
      else if (key == "tolerance")
        cfg.solver.tolerance = p.number(v, key);
      else if (key == "objective_tolerance")
        cfg.solver.objective_tolerance = p.number(v, key);
      else if (key == "initial_step")
        cfg.solver.initial_step = p.number(v, key);
      else if (key == "backtrack_factor")
        cfg.solver.backtrack_factor = p.number(v, key);
      else if (key == "max_backtracks")
        cfg.solver.max_backtracks = static_cast<int>(p.integer(v, key));
      else
        p.fail("unknown solver setting '" + key + "'", key);
    }
  }

  if (auto it = doc.find("fds"); it != doc.end()) {
    if (!it->is_array()) p.fail("'fds' must be an array", "fds");
    for (const auto& f : *it)
      cfg.fds.push_back({p.string(p.member(f, "determinant"), "determinant"),
                         p.strings(p.member(f, "determined"), "determined")});
  }
  if (auto it = doc.find("use_fds"); it != doc.end()) {
    if (!it->is_boolean()) p.fail("'use_fds' must be a boolean", "use_fds");
    cfg.use_fds = it->get<bool>();
  }
  if (auto it = doc.find("seed"); it != doc.end()) {
    auto s = p.integer(*it, "seed");
    if (s < 0) p.fail("'seed' must be non-negative", "seed");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  cfg.solver.seed = cfg.seed;

  // Name checks that only need the config itself.
  std::map<std::string, AttributeKind> declared;
  for (const auto& r : cfg.relations)
    for (const auto& a : r.attributes) declared.emplace(a.name, a.kind);
  std::vector<std::string> in_order;
  collect(cfg.order, in_order);
  std::set<std::string> order_vars(in_order.begin(), in_order.end());
  std::set<std::string> seen;
  for (const auto& f : cfg.features) {
    if (!order_vars.count(f.name)) p.fail("unknown feature '" + f.name + "'", f.name);
    if (!seen.insert(f.name).second) p.fail("feature '" + f.name + "' listed twice", f.name);
    auto d = declared.find(f.name);
    if (d != declared.end() && d->second != f.kind)
      p.fail("feature '" + f.name + "' is declared " + to_string(d->second), f.name);
  }
  if (cfg.label) {
    if (!order_vars.count(*cfg.label)) p.fail("unknown label '" + *cfg.label + "'", *cfg.label);
    if (seen.count(*cfg.label)) p.fail("label '" + *cfg.label + "' is also a feature", *cfg.label);
    auto d = declared.find(*cfg.label);
    if (d != declared.end() && d->second != AttributeKind::Continuous)
      p.fail("label '" + *cfg.label + "' must be continuous", *cfg.label);
  }
  for (const auto& fd : cfg.fds) {
    if (!declared.count(fd.determinant)) p.fail("FD references unknown variable '" + fd.determinant + "'", fd.determinant);
    for (const auto& c : fd.determined)
      if (!declared.count(c)) p.fail("FD references unknown variable '" + c + "'", c);
  }
  return cfg;
}

JobConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace factlearn
