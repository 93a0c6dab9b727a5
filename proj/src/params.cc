#include "kgrec/params.h"

#include <algorithm>
#include <cmath>

namespace kgrec {

namespace {

Matrix xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = (2.0 * uniform_open01(rng) - 1.0) * bound;
  return m;
}

MlpParams init_mlp(std::size_t d, Rng& rng) {
  MlpParams p;
  p.w1 = xavier(d, d, rng);
  p.b1 = Matrix(1, d);
  p.w2 = xavier(d, d, rng);
  p.b2 = Matrix(1, d);
  return p;
}

}  // namespace

ParamStore ParamStore::init(const ParamShape& shape, Rng& rng) {
  if (shape.dim == 0) throw std::invalid_argument("hidden dimension must be positive");
  ParamStore p;
  p.dim = shape.dim;
  p.entity_embed = xavier(shape.num_entities, shape.dim, rng);
  p.relation_embed = xavier(shape.num_relations, shape.dim, rng);
  p.user_embed = xavier(shape.num_users, shape.dim, rng);
  p.attn_q = xavier(shape.dim, shape.dim, rng);
  p.attn_k = xavier(shape.dim, shape.dim, rng);
  p.mlp_u = init_mlp(shape.dim, rng);
  p.mlp_k = init_mlp(shape.dim, rng);
  if (shape.separate_cf_tables) {
    p.cf_user_embed = xavier(shape.num_users, shape.dim, rng);
    p.cf_item_embed = xavier(shape.num_items, shape.dim, rng);
  }
  p.reset_optimizer();
  return p;
}

std::vector<std::pair<std::string, Matrix*>> ParamStore::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out = {
      {"entity_embed", &entity_embed}, {"relation_embed", &relation_embed},
      {"user_embed", &user_embed},     {"attn_q", &attn_q},
      {"attn_k", &attn_k},             {"mlp_u.w1", &mlp_u.w1},
      {"mlp_u.b1", &mlp_u.b1},         {"mlp_u.w2", &mlp_u.w2},
      {"mlp_u.b2", &mlp_u.b2},         {"mlp_k.w1", &mlp_k.w1},
      {"mlp_k.b1", &mlp_k.b1},         {"mlp_k.w2", &mlp_k.w2},
      {"mlp_k.b2", &mlp_k.b2},
  };
  if (!cf_user_embed.empty() || !cf_item_embed.empty()) {
    out.emplace_back("cf_user_embed", &cf_user_embed);
    out.emplace_back("cf_item_embed", &cf_item_embed);
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ParamStore::tensors() const {
  auto mut = const_cast<ParamStore*>(this)->tensors();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mut.size());
  for (auto& [n, m] : mut) out.emplace_back(n, m);
  return out;
}

bool ParamStore::all_finite() const {
  for (const auto& [name, m] : tensors()) {
    if (!m->all_finite()) return false;
  }
  return true;
}

void ParamStore::reset_optimizer() {
  adam_m.clear();
  adam_v.clear();
  for (const auto& [name, m] : tensors()) {
    adam_m.emplace_back(m->rows(), m->cols());
    adam_v.emplace_back(m->rows(), m->cols());
  }
  step = 0;
}

Gradients zero_gradients(const ParamStore& params) {
  Gradients g;
  for (const auto& [name, m] : params.tensors()) g.emplace_back(m->rows(), m->cols());
  return g;
}

void adam_step(ParamStore& params, const Gradients& grads, const AdamConfig& cfg) {
  auto ts = params.tensors();
  if (grads.size() != ts.size() || params.adam_m.size() != ts.size()) {
    throw std::invalid_argument("adam_step: gradient set does not match parameters");
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!grads[i].same_shape(*ts[i].second)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + ts[i].first);
    }
    const auto g = grads[i].values();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) throw NonFiniteGradient(ts[i].first, k);
    }
  }
  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto p = ts[i].second->values();
    auto g = grads[i].values();
    auto m = params.adam_m[i].values();
    auto v = params.adam_v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] = p[k] * decay - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

GradCheckReport grad_check(const LossWithGrad& fn, const ParamStore& params, double tol, double eps,
                           double floor) {
  GradCheckReport report;
  report.tolerance = tol;
  Gradients analytic = zero_gradients(params);
  fn(params, &analytic);

  ParamStore probe = params;
  auto ts = probe.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    TensorGradCheck tc;
    tc.name = ts[i].first;
    auto vals = ts[i].second->values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double orig = vals[k];
      vals[k] = orig + eps;
      const double lp = fn(probe, nullptr);
      vals[k] = orig - eps;
      const double lm = fn(probe, nullptr);
      vals[k] = orig;
      const double num = (lp - lm) / (2.0 * eps);
      const double ana = analytic[i][k];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      if (k == 0 || rel > tc.max_rel_error) {
        tc.max_rel_error = rel;
        tc.worst_index = k;
        tc.analytic = ana;
        tc.numeric = num;
      }
    }
    if (!(tc.max_rel_error <= tol)) report.pass = false;
    report.tensors.push_back(tc);
  }
  return report;
}

}  // namespace kgrec
