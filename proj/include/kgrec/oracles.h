#pragma once

// Reference implementations written for clarity, not speed. They share no
// code with the kernels they check: dense matrices, quadratic loops, full sorts.

#include <cstddef>
#include <set>
#include <utility>
#include <vector>

#include "kgrec/graphstore.h"
#include "kgrec/tensor.h"

namespace kgrec::oracle {

Matrix dense_matmul(const Matrix& a, const Matrix& b);

// Layers [e^(0), ..., e^(L)] with e^(l) = sum_r (A_r e^(l-1)) diag(e_r), where
// A_r[h][t] = w / |N_h| for every listed triplet (h, r, t) with weight w.
std::vector<Matrix> dense_kg_layers(const Matrix& e0, const Matrix& relation, const std::vector<Triplet>& triplets,
                                    const std::vector<double>& weights, int layers);

// u^(l) = P e^(l-1)[items], P[u][v] = 1 / |N_u|.
std::vector<Matrix> dense_user_layers(const Matrix& u0, const std::vector<std::pair<Index, Index>>& edges,
                                      std::size_t num_items, const std::vector<Matrix>& entity_layers, int layers);

// Powers of D^-1/2 A D^-1/2 on the stacked (users + items) table.
std::pair<Matrix, Matrix> dense_lightgcn(const Matrix& u0, const Matrix& i0,
                                         const std::vector<std::pair<Index, Index>>& edges, int layers,
                                         bool include_layer0);

// (e_h Wq) . (e_t Wk (*) e_r) / sqrt(d) by explicit loops.
double attention_logit(const Matrix& entity, const Matrix& relation, const Matrix& wq, const Matrix& wk,
                       const Triplet& t);

// omega_i = exp(f_i) / sum over triplets j with the same head of exp(f_j).
std::vector<double> head_softmax(const std::vector<Index>& heads, const std::vector<double>& f);

// Full stable sort by (score, index); ties go to the smaller index.
std::vector<std::size_t> sort_top_k(const std::vector<double>& scores, std::size_t k, bool largest);

struct UserRanking {
  double recall = 0.0;
  double ndcg = 0.0;
};

// Sorts every non-excluded item of one user and computes the metrics from
// their definitions.
UserRanking rank_user(const std::vector<double>& scores, const std::set<Index>& exclude,
                      const std::set<Index>& relevant, std::size_t n);

}  // namespace kgrec::oracle
