#include "kgrec/objectives.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace kgrec {

LossBundle joint_loss(double l_rec, double l_m, double l_c, double l2, double lambda1, double lambda2,
                      double tau) {
  LossBundle b;
  b.l_rec = l_rec;
  b.l_m = l_m;
  b.l_c = l_c;
  b.l2 = l2;
  b.lambda1 = lambda1;
  b.lambda2 = lambda2;
  b.tau = tau;
  b.total = l_rec + lambda1 * l_m + lambda2 * l_c + l2;
  return b;
}

double neg_log_sigmoid(double x) { return -(std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)))); }

namespace {

Var reduce(Tape& tape, Var per_item, Reduction reduction) {
  Var s = ops::sum(tape, per_item);
  const std::size_t n = tape.value(per_item).rows();
  if (reduction == Reduction::kMean && n > 0) return ops::scale(tape, s, 1.0 / static_cast<double>(n));
  return s;
}

}  // namespace

Var reconstruction_loss(Tape& tape, const KnowledgeGraph& kg, std::span<const TripletId> mask, Var entity_out,
                        Var relation, Reduction reduction) {
  if (mask.empty()) return tape.scalar(0.0);
  std::vector<Index> h, r, t;
  h.reserve(mask.size());
  r.reserve(mask.size());
  t.reserve(mask.size());
  for (TripletId id : mask) {
    const Triplet& tr = kg.triplet(id);
    h.push_back(tr.head);
    r.push_back(tr.relation);
    t.push_back(tr.tail);
  }
  Var eh = ops::gather_rows(tape, entity_out, std::move(h));
  Var et = ops::gather_rows(tape, entity_out, std::move(t));
  Var er = ops::gather_rows(tape, relation, std::move(r));
  Var logits = ops::row_dot(tape, eh, ops::mul(tape, et, er));
  return ops::scale(tape, reduce(tape, ops::log_sigmoid(tape, logits), reduction), -1.0);
}

std::vector<std::array<Index, 2>> sample_contrastive_negatives(std::span<const Index> items, Rng& rng) {
  if (items.size() < 3) {
    throw ConfigError("contrastive batch needs at least 3 items, got " + std::to_string(items.size()));
  }
  std::vector<std::array<Index, 2>> out(items.size());
  const std::size_t n = items.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& slot : out[i]) {
      // Uniform over the other n - 1 positions.
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      slot = items[j];
    }
  }
  return out;
}

Var contrastive_loss(Tape& tape, Var z_u, Var z_k, std::span<const Index> items,
                     std::span<const std::array<Index, 2>> negatives, const ContrastiveOptions& opts) {
  if (negatives.size() != items.size()) throw std::invalid_argument("contrastive_loss: one negative pair per item");
  if (items.empty()) return tape.scalar(0.0);
  std::vector<Index> anchor(items.begin(), items.end()), n1, n2;
  for (const auto& p : negatives) {
    n1.push_back(p[0]);
    n2.push_back(p[1]);
  }
  Var nu = ops::l2_normalize_rows(tape, z_u);
  Var nk = ops::l2_normalize_rows(tape, z_k);
  Var k_anchor = ops::gather_rows(tape, nk, anchor);
  Var u_anchor = ops::gather_rows(tape, nu, std::move(anchor));
  Var u_n1 = ops::gather_rows(tape, nu, std::move(n1));
  Var u_n2 = ops::gather_rows(tape, nu, std::move(n2));
  const double inv_tau = 1.0 / opts.tau;
  Var pos = ops::scale(tape, ops::row_dot(tape, u_anchor, k_anchor), inv_tau);
  Var s1 = ops::scale(tape, ops::row_dot(tape, u_n1, k_anchor), inv_tau);
  Var s2 = ops::scale(tape, ops::row_dot(tape, u_n2, k_anchor), inv_tau);
  // Printed form: 3 e^{pos} + e^{pos} + e^{s1} + e^{s2} = 4 e^{pos} + e^{s1} + e^{s2}.
  Var pos_term = opts.literal_denominator ? ops::add_scalar(tape, pos, std::log(4.0)) : pos;
  const Var cols[] = {pos_term, s1, s2};
  Var lse = ops::row_logsumexp(tape, ops::concat_cols(tape, cols));
  return reduce(tape, ops::sub(tape, lse, pos), opts.reduction);
}

ContrastiveTerms contrastive_terms(const Matrix& z_u, const Matrix& z_k, std::span<const Index> items,
                                   std::span<const std::array<Index, 2>> negatives,
                                   const ContrastiveOptions& opts) {
  const Matrix nu = normalize_rows(z_u);
  const Matrix nk = normalize_rows(z_k);
  ContrastiveTerms t;
  const double c = opts.literal_denominator ? 4.0 : 1.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Index v = items[i];
    const double pos = dot(nu.row(v), nk.row(v));
    const double a = dot(nu.row(negatives[i][0]), nk.row(v));
    const double b = dot(nu.row(negatives[i][1]), nk.row(v));
    const double denom = c * std::exp(pos / opts.tau) + std::exp(a / opts.tau) + std::exp(b / opts.tau);
    t.loss.push_back(-(pos / opts.tau) + std::log(denom));
    t.pos.push_back(pos);
    t.neg.push_back({a, b});
  }
  return t;
}

double contrastive_lower_bound(std::span<const double> negative_sims, double tau, bool literal_denominator) {
  double s = (literal_denominator ? 4.0 : 1.0) * std::exp(1.0 / tau);
  for (double x : negative_sims) s += std::exp(x / tau);
  return -1.0 / tau + std::log(s);
}

Var bpr_loss(Tape& tape, Var scores_pos, Var scores_neg, Reduction reduction) {
  if (tape.value(scores_pos).rows() == 0) return tape.scalar(0.0);
  Var margin = ops::sub(tape, scores_pos, scores_neg);
  return ops::scale(tape, reduce(tape, ops::log_sigmoid(tape, margin), reduction), -1.0);
}

Matrix normalize_rows(const Matrix& m, double eps) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = std::max(std::sqrt(dot(m.row(r), m.row(r))), eps);
    for (double& v : out.row(r)) v /= n;
  }
  return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

AUReport alignment_uniformity(const Matrix& x, const Matrix& y, const Matrix& sample, std::size_t max_pairs,
                              std::uint64_t seed) {
  if (x.rows() < 2 || sample.rows() < 2) throw UndefinedReport("alignment/uniformity need at least 2 samples");
  if (!x.same_shape(y)) throw std::invalid_argument("alignment: positive pair matrices differ in shape");
  AUReport r;
  double a = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) a += sq_dist(x.row(i), y.row(i));
  r.alignment = a / static_cast<double>(x.rows());
  r.positive_pairs = x.rows();

  const std::size_t n = sample.rows();
  const std::size_t all_pairs = n * (n - 1) / 2;
  // Accumulate exp(-2 d^2) relative to the maximum term (d = 0 gives 1).
  double acc = 0.0;
  if (all_pairs <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) acc += std::exp(-2.0 * sq_dist(sample.row(i), sample.row(j)));
    }
    r.uniformity_pairs = all_pairs;
  } else {
    Rng rng(seed);
    for (std::size_t p = 0; p < max_pairs; ++p) {
      const std::size_t i = uniform_index(rng, n);
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      acc += std::exp(-2.0 * sq_dist(sample.row(i), sample.row(j)));
    }
    r.uniformity_pairs = max_pairs;
  }
  r.uniformity = std::log(acc / static_cast<double>(r.uniformity_pairs));
  return r;
}

}  // namespace kgrec
