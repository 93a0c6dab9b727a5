#include "kgrec/oracles.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kgrec::oracle {

Matrix dense_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

std::vector<Matrix> dense_kg_layers(const Matrix& e0, const Matrix& relation, const std::vector<Triplet>& triplets,
                                    const std::vector<double>& weights, int layers) {
  const std::size_t n = e0.rows(), d = e0.cols();
  std::vector<std::size_t> deg(n, 0);
  for (const auto& t : triplets) ++deg[t.head];
  std::vector<Matrix> adj(relation.rows(), Matrix(n, n));
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    adj[t.relation](t.head, t.tail) += weights[i] / static_cast<double>(deg[t.head]);
  }
  std::vector<Matrix> out{e0};
  for (int l = 1; l <= layers; ++l) {
    Matrix next(n, d);
    for (std::size_t r = 0; r < relation.rows(); ++r) {
      const Matrix prop = dense_matmul(adj[r], out.back());
      for (std::size_t h = 0; h < n; ++h) {
        for (std::size_t c = 0; c < d; ++c) next(h, c) += prop(h, c) * relation(r, c);
      }
    }
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<Matrix> dense_user_layers(const Matrix& u0, const std::vector<std::pair<Index, Index>>& edges,
                                      std::size_t num_items, const std::vector<Matrix>& entity_layers, int layers) {
  const std::size_t nu = u0.rows();
  std::vector<std::size_t> deg(nu, 0);
  for (const auto& [u, v] : edges) ++deg[u];
  Matrix p(nu, num_items);
  for (const auto& [u, v] : edges) p(u, v) += 1.0 / static_cast<double>(deg[u]);
  std::vector<Matrix> out{u0};
  for (int l = 1; l <= layers; ++l) {
    const Matrix& prev = entity_layers[l - 1];
    Matrix items(num_items, prev.cols());
    for (std::size_t v = 0; v < num_items; ++v) {
      for (std::size_t c = 0; c < prev.cols(); ++c) items(v, c) = prev(v, c);
    }
    out.push_back(dense_matmul(p, items));
  }
  return out;
}

std::pair<Matrix, Matrix> dense_lightgcn(const Matrix& u0, const Matrix& i0,
                                         const std::vector<std::pair<Index, Index>>& edges, int layers,
                                         bool include_layer0) {
  const std::size_t nu = u0.rows(), ni = i0.rows(), n = nu + ni, d = u0.cols();
  Matrix a(n, n);
  for (const auto& [u, v] : edges) {
    a(u, nu + v) = 1.0;
    a(nu + v, u) = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) != 0.0) a(i, j) /= std::sqrt(deg[i] * deg[j]);
    }
  }
  Matrix x(n, d);
  for (std::size_t i = 0; i < nu; ++i) {
    for (std::size_t c = 0; c < d; ++c) x(i, c) = u0(i, c);
  }
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t c = 0; c < d; ++c) x(nu + i, c) = i0(i, c);
  }
  Matrix total = include_layer0 ? x : Matrix(n, d);
  for (int l = 1; l <= layers; ++l) {
    x = dense_matmul(a, x);
    for (std::size_t k = 0; k < total.size(); ++k) total.values()[k] += x.values()[k];
  }
  Matrix us(nu, d), is(ni, d);
  for (std::size_t i = 0; i < nu; ++i) {
    for (std::size_t c = 0; c < d; ++c) us(i, c) = total(i, c);
  }
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t c = 0; c < d; ++c) is(i, c) = total(nu + i, c);
  }
  return {us, is};
}

double attention_logit(const Matrix& entity, const Matrix& relation, const Matrix& wq, const Matrix& wk,
                       const Triplet& t) {
  const std::size_t d = entity.cols();
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double q = 0.0, k = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      q += entity(t.head, i) * wq(i, j);
      k += entity(t.tail, i) * wk(i, j);
    }
    s += q * k * relation(t.relation, j);
  }
  return s / std::sqrt(static_cast<double>(d));
}

std::vector<double> head_softmax(const std::vector<Index>& heads, const std::vector<double>& f) {
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (heads[j] == heads[i]) z += std::exp(f[j]);
    }
    out[i] = std::exp(f[i]) / z;
  }
  return out;
}

std::vector<std::size_t> sort_top_k(const std::vector<double>& scores, std::size_t k, bool largest) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return largest ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

UserRanking rank_user(const std::vector<double>& scores, const std::set<Index>& exclude,
                      const std::set<Index>& relevant, std::size_t n) {
  std::vector<Index> cand;
  for (Index v = 0; v < scores.size(); ++v) {
    if (!exclude.count(v)) cand.push_back(v);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  UserRanking r;
  if (relevant.empty()) return r;
  std::size_t hits = 0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < cand.size() && i < n; ++i) {
    if (relevant.count(cand[i])) {
      ++hits;
      dcg += std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < relevant.size() && i < n; ++i) idcg += std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
  r.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  r.ndcg = dcg / idcg;
  return r;
}

}  // namespace kgrec::oracle
