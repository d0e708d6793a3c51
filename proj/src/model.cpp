#include "factlearn/model.hpp"

#include <random>

#include "factlearn/errors.hpp"

namespace factlearn {

double ParameterSet::value(const std::string& block, const Key& key) const {
  auto b = layout.find_block(block);
  if (!b) throw Error("no parameter block " + block);
  auto r = layout.block(*b).find(key);
  if (!r) return 0.0;
  return values[layout.block(*b).offset + *r];
}

std::vector<double> align(const ParameterSet& from, const BlockLayout& to, double* dropped_sq) {
  std::vector<double> out(to.dimension(), 0.0);
  double dropped = 0.0;
  for (const auto& b : from.layout.blocks()) {
    auto tb = to.find_block(b.name);
    for (std::size_t r = 0; r < b.size(); ++r) {
      double v = from.values[b.offset + r];
      std::optional<std::size_t> row;
      if (tb) {
        const auto& target = to.block(*tb);
        if (target.key_variables != b.key_variables) throw Error("block " + b.name + " has different key variables");
        row = target.find(b.keys[r]);
        if (row) *row += target.offset;
      }
      if (row)
        out[*row] = v;
      else
        dropped += v * v;
    }
  }
  if (dropped_sq) *dropped_sq = dropped;
  return out;
}

std::vector<double> Objective::initial_point(std::uint64_t) const { return std::vector<double>(dimension(), 0.0); }

double QuadraticObjective::value(std::span<const double> x) const {
  std::vector<double> sx(x.size()), px(x.size());
  apply_sigma(x, sx);
  apply_penalty(x, px);
  return 0.5 * dot(x, sx) - dot(c(), x) + 0.5 * s() + 0.5 * lambda() * dot(x, px);
}

void QuadraticObjective::gradient(std::span<const double> x, std::span<double> out) const {
  std::vector<double> px(x.size());
  apply_sigma(x, out);
  apply_penalty(x, px);
  const auto& cv = c();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += lambda() * px[i] - cv[i];
}

void QuadraticObjective::apply_penalty(std::span<const double> x, std::span<double> out) const {
  std::copy(x.begin(), x.end(), out.begin());
}

LinearModel::LinearModel(SparseSigma sigma, double lambda)
    : sigma_(std::move(sigma)), layout_(observed_layout(sigma_)), kernel_(sigma_, layout_), lambda_(lambda) {}

LinearModel::LinearModel(SparseSigma sigma, BlockLayout layout, double lambda)
    : sigma_(std::move(sigma)), layout_(std::move(layout)), kernel_(sigma_, layout_), lambda_(lambda) {}

ParameterSet LinearModel::export_parameters(std::span<const double> x) const {
  return {layout_, std::vector<double>(x.begin(), x.end())};
}

namespace {

std::string factor_name(const std::string& var, int l) { return var + "#" + std::to_string(l); }

}  // namespace

FactorizationModel::FactorizationModel(SparseSigma sigma, int rank, double lambda, std::vector<Feature> factor_features,
                                       std::map<std::string, std::vector<Key>> factor_keys,
                                       std::shared_ptr<const Penalty> penalty)
    : sigma_(std::move(sigma)),
      rank_(rank),
      lambda_(lambda),
      factor_features_(std::move(factor_features)),
      penalty_(penalty ? std::move(penalty) : std::make_shared<SquaredNorm>()) {
  if (rank_ < 1) throw SchemaError("factorization machine rank must be at least 1");
  h_layout_ = observed_layout(sigma_);
  kernel_ = SigmaKernel(sigma_, h_layout_);
  const auto& comps = sigma_.components();

  if (factor_features_.empty()) {
    for (const auto& c : comps)
      if (c.monomial.degree() == 1) {
        auto v = c.monomial.variables().front();
        factor_features_.push_back(
            {v, c.categorical.empty() ? AttributeKind::Continuous : AttributeKind::Categorical});
      }
  }
  auto feature_index = [&](const std::string& v) {
    for (std::size_t i = 0; i < factor_features_.size(); ++i)
      if (factor_features_[i].name == v) return i;
    throw SchemaError("variable " + v + " has no factor block");
  };

  first_order_of_h_.assign(comps.size(), static_cast<std::size_t>(-1));
  std::map<std::string, std::size_t> singleton_h;
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const auto& m = comps[j].monomial;
    if (m.degree() > 2 || (m.degree() == 2 && m.powers().size() != 2))
      throw SchemaError("component " + m.to_string() + " is not a factorization machine component");
    if (m.degree() <= 1) {
      first_order_of_h_[j] = layout_.add(h_layout_.block(j).name, h_layout_.block(j).key_variables,
                                         h_layout_.block(j).keys);
      if (m.degree() == 1) singleton_h[m.variables().front()] = j;
    }
  }
  for (std::size_t v = 0; v < factor_features_.size(); ++v) {
    const auto& f = factor_features_[v];
    std::vector<std::string> kv;
    if (f.kind == AttributeKind::Categorical) kv.push_back(f.name);
    std::vector<Key> keys;
    if (auto it = factor_keys.find(f.name); it != factor_keys.end())
      keys = it->second;
    else if (auto s = singleton_h.find(f.name); s != singleton_h.end())
      keys = h_layout_.block(s->second).keys;
    else
      throw SchemaError("no key set for factor variable " + f.name);
    std::vector<std::size_t> blocks;
    for (int l = 1; l <= rank_; ++l) blocks.push_back(layout_.add(factor_name(f.name, l), kv, keys));
    factor_blocks_.push_back(std::move(blocks));
  }

  for (std::size_t j = 0; j < comps.size(); ++j) {
    const auto& m = comps[j].monomial;
    if (m.degree() != 2) continue;
    auto vars = m.variables();
    PairComponent pc;
    pc.u_var = feature_index(vars[0]);
    pc.v_var = feature_index(vars[1]);
    const auto& hb = h_layout_.block(j);
    const auto& ub = layout_.block(factor_blocks_[pc.u_var][0]);
    const auto& vb = layout_.block(factor_blocks_[pc.v_var][0]);
    auto pu = key_projection(hb.key_variables, ub.key_variables);
    auto pv = key_projection(hb.key_variables, vb.key_variables);
    for (std::size_t r = 0; r < hb.size(); ++r) {
      Key ku, kvv;
      for (auto p : pu) ku.push_back(hb.keys[r][p]);
      for (auto p : pv) kvv.push_back(hb.keys[r][p]);
      auto ur = ub.find(ku), vr = vb.find(kvv);
      if (!ur || !vr) throw Error("dimension mismatch: pair key of " + m.to_string() + " missing from a factor block");
      pc.rows.push_back({hb.offset + r, *ur, *vr});
    }
    pair_components_.push_back(std::move(pc));
  }
}

std::size_t FactorizationModel::factor_block(const std::string& variable, int l) const {
  for (std::size_t i = 0; i < factor_features_.size(); ++i)
    if (factor_features_[i].name == variable) return factor_blocks_[i][static_cast<std::size_t>(l - 1)];
  throw Error("no factor block for " + variable);
}

std::size_t FactorizationModel::first_order_block(const std::string& component) const {
  auto b = layout_.find_block(component);
  if (!b) throw Error("no first-order block " + component);
  return *b;
}

std::vector<double> FactorizationModel::g_evaluate(std::span<const double> x) const {
  std::vector<double> g(h_layout_.dimension(), 0.0);
  for (std::size_t j = 0; j < first_order_of_h_.size(); ++j) {
    if (first_order_of_h_[j] == static_cast<std::size_t>(-1)) continue;
    const auto& hb = h_layout_.block(j);
    const auto& pb = layout_.block(first_order_of_h_[j]);
    for (std::size_t r = 0; r < hb.size(); ++r) g[hb.offset + r] = x[pb.offset + r];
  }
  for (const auto& pc : pair_components_) {
    for (int l = 0; l < rank_; ++l) {
      std::size_t uo = layout_.block(factor_blocks_[pc.u_var][static_cast<std::size_t>(l)]).offset;
      std::size_t vo = layout_.block(factor_blocks_[pc.v_var][static_cast<std::size_t>(l)]).offset;
      for (const auto& row : pc.rows) g[row.h_row] += x[uo + row.u_row] * x[vo + row.v_row];
    }
  }
  return g;
}

double FactorizationModel::value(std::span<const double> x) const {
  auto g = g_evaluate(x);
  return 0.5 * kernel_.quadratic_form(g) - dot(g, kernel_.correlation()) + 0.5 * kernel_.label_moment() +
         0.5 * lambda_ * penalty_->value(x);
}

void FactorizationModel::gradient(std::span<const double> x, std::span<double> out) const {
  auto g = g_evaluate(x);
  std::vector<double> r(g.size());
  kernel_.multiply(g, r);
  const auto& c = kernel_.correlation();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= c[i];

  penalty_->gradient(x, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= 0.5 * lambda_;
  for (std::size_t j = 0; j < first_order_of_h_.size(); ++j) {
    if (first_order_of_h_[j] == static_cast<std::size_t>(-1)) continue;
    const auto& hb = h_layout_.block(j);
    const auto& pb = layout_.block(first_order_of_h_[j]);
    for (std::size_t k = 0; k < hb.size(); ++k) out[pb.offset + k] += r[hb.offset + k];
  }
  for (const auto& pc : pair_components_) {
    for (int l = 0; l < rank_; ++l) {
      std::size_t uo = layout_.block(factor_blocks_[pc.u_var][static_cast<std::size_t>(l)]).offset;
      std::size_t vo = layout_.block(factor_blocks_[pc.v_var][static_cast<std::size_t>(l)]).offset;
      for (const auto& row : pc.rows) {
        double rv = r[row.h_row];
        out[uo + row.u_row] += rv * x[vo + row.v_row];
        out[vo + row.v_row] += rv * x[uo + row.u_row];
      }
    }
  }
}

std::vector<double> FactorizationModel::initial_point(std::uint64_t seed) const {
  std::vector<double> x(dimension(), 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (const auto& blocks : factor_blocks_)
    for (auto b : blocks) {
      const auto& blk = layout_.block(b);
      for (std::size_t r = 0; r < blk.size(); ++r) x[blk.offset + r] = dist(rng);
    }
  return x;
}

ParameterSet FactorizationModel::export_parameters(std::span<const double> x) const {
  if (exporter_) return exporter_(x);
  return {layout_, std::vector<double>(x.begin(), x.end())};
}

std::unique_ptr<Objective> make_objective(const ModelSpec& model, SparseSigma sigma) {
  switch (model.kind) {
    case ModelKind::Linear:
    case ModelKind::Polynomial2:
      return std::make_unique<LinearModel>(std::move(sigma), model.lambda);
    case ModelKind::Factorization:
      return std::make_unique<FactorizationModel>(std::move(sigma), model.rank, model.lambda, model.features);
    case ModelKind::Pca:
      break;
  }
  throw SchemaError("PCA is not trained by gradient descent on a loss");
}

LinearStep prepare_linear_step(const QuadraticObjective& objective, std::span<const double> theta,
                               std::span<const double> d) {
  LinearStep s;
  s.d.assign(d.begin(), d.end());
  s.sigma_d.resize(d.size());
  s.penalty_d.resize(d.size());
  objective.apply_sigma(d, s.sigma_d);
  objective.apply_penalty(d, s.penalty_d);
  s.theta_sigma_d = dot(theta, s.sigma_d);
  s.d_sigma_d = dot(d, s.sigma_d);
  s.c_d = dot(objective.c(), d);
  s.theta_penalty_d = dot(theta, s.penalty_d);
  s.d_penalty_d = dot(d, s.penalty_d);
  s.d_norm2 = dot(d, d);
  s.lambda = objective.lambda();
  return s;
}

double objective_change(const LinearStep& s, double alpha) {
  return -alpha * s.theta_sigma_d + 0.5 * alpha * alpha * s.d_sigma_d + alpha * s.c_d -
         s.lambda * alpha * s.theta_penalty_d + 0.5 * s.lambda * alpha * alpha * s.d_penalty_d;
}

bool armijo_inequality(const LinearStep& s, double alpha) {
  double lhs = alpha * s.theta_sigma_d - 0.5 * alpha * alpha * s.d_sigma_d - alpha * s.c_d +
               s.lambda * alpha * s.theta_penalty_d - 0.5 * s.lambda * alpha * alpha * s.d_penalty_d;
  return lhs <= 0.5 * alpha * s.d_norm2;
}

std::vector<double> next_gradient(const LinearStep& s, double alpha) {
  std::vector<double> out(s.d.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = s.d[i] - alpha * (s.sigma_d[i] + s.lambda * s.penalty_d[i]);
  return out;
}

}  // namespace factlearn
