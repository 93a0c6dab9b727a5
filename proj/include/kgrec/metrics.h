#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "kgrec/graphstore.h"
#include "kgrec/tensor.h"

namespace kgrec {

struct UserMetrics {
  Index user = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct RankingMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t n = 20;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;  // empty test set
  std::vector<UserMetrics> per_user;
};

// Fills `out` (length num_items) with user u's scores.
using ScoreFn = std::function<void(Index u, std::span<double> out)>;

// Top-n item ids by descending score, ties by ascending id, skipping `exclude`
// (sorted ascending).
std::vector<Index> rank_top_n(std::span<const double> scores, std::span<const Index> exclude, std::size_t n);

// Binary-gain metrics for one ranked list against a sorted relevant set.
double recall_at_n(std::span<const Index> ranked, std::span<const Index> relevant);
double ndcg_at_n(std::span<const Index> ranked, std::span<const Index> relevant, std::size_t n);

// Ranks every item not in `exclude` for each user with a non-empty test set.
// Users are split across `workers` threads; sums are reduced in user order.
RankingMetrics full_rank_eval(const ScoreFn& scores, const InteractionGraph& exclude, const InteractionGraph& test,
                              std::size_t n, std::size_t workers = 1);

// Dense users x items score matrix.
RankingMetrics full_rank_eval(const Matrix& scores, const InteractionGraph& exclude, const InteractionGraph& test,
                              std::size_t n, std::size_t workers = 1);

// Inner-product model: score(u, v) = user_out[u] . item_out[v] for v < num_items.
RankingMetrics full_rank_eval(const Matrix& user_out, const Matrix& item_out, const InteractionGraph& exclude,
                              const InteractionGraph& test, std::size_t n, std::size_t workers = 1);

// Expected Recall@n of a uniformly random ranking: mean over evaluated users of
// min(n, C_u) / C_u with C_u the user's candidate count.
double random_ranking_recall(const InteractionGraph& exclude, const InteractionGraph& test, std::size_t n);

// Scores every item by its training degree.
RankingMetrics popularity_eval(const InteractionGraph& train, const InteractionGraph& test, std::size_t n,
                               std::size_t workers = 1);

}  // namespace kgrec
