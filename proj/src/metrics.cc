#include "kgrec/metrics.h"

#include <algorithm>
#include <cmath>
#include <thread>

namespace kgrec {

std::vector<Index> rank_top_n(std::span<const double> scores, std::span<const Index> exclude, std::size_t n) {
  std::vector<Index> cand;
  cand.reserve(scores.size());
  std::size_t e = 0;
  for (Index v = 0; v < scores.size(); ++v) {
    while (e < exclude.size() && exclude[e] < v) ++e;
    if (e < exclude.size() && exclude[e] == v) continue;
    cand.push_back(v);
  }
  const auto better = [&](Index a, Index b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  const std::size_t k = std::min(n, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);
  cand.resize(k);
  return cand;
}

double recall_at_n(std::span<const Index> ranked, std::span<const Index> relevant) {
  if (relevant.empty()) return 0.0;
  std::size_t hits = 0;
  for (Index v : ranked) hits += std::binary_search(relevant.begin(), relevant.end(), v);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_n(std::span<const Index> ranked, std::span<const Index> relevant, std::size_t n) {
  if (relevant.empty()) return 0.0;
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < ranked.size() && i < n; ++i) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[i])) dcg += 1.0 / std::log2(i + 2.0);
  }
  for (std::size_t i = 0; i < std::min(relevant.size(), n); ++i) idcg += 1.0 / std::log2(i + 2.0);
  return dcg / idcg;
}

RankingMetrics full_rank_eval(const ScoreFn& scores, const InteractionGraph& exclude, const InteractionGraph& test,
                              std::size_t n, std::size_t workers) {
  RankingMetrics m;
  m.n = n;
  const std::size_t num_items = test.num_items();
  std::vector<Index> users;
  for (Index u = 0; u < test.num_users(); ++u) {
    if (test.items_of(u).empty()) {
      ++m.users_skipped;
    } else {
      users.push_back(u);
    }
  }
  m.per_user.resize(users.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> row(num_items);
    for (std::size_t i = begin; i < end; ++i) {
      const Index u = users[i];
      std::fill(row.begin(), row.end(), 0.0);
      scores(u, row);
      std::span<const Index> ex;
      if (u < exclude.num_users()) ex = exclude.items_of(u);
      const auto ranked = rank_top_n(row, ex, n);
      const auto rel = test.items_of(u);
      m.per_user[i] = {u, recall_at_n(ranked, rel), ndcg_at_n(ranked, rel, n)};
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, users.size()));
  if (workers == 1) {
    work(0, users.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(users.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& pu : m.per_user) {
    m.recall += pu.recall;
    m.ndcg += pu.ndcg;
  }
  m.users_evaluated = users.size();
  if (!users.empty()) {
    m.recall /= static_cast<double>(users.size());
    m.ndcg /= static_cast<double>(users.size());
  }
  return m;
}

RankingMetrics full_rank_eval(const Matrix& scores, const InteractionGraph& exclude, const InteractionGraph& test,
                              std::size_t n, std::size_t workers) {
  if (scores.cols() != test.num_items() || scores.rows() < test.num_users()) {
    throw ContractViolation("score matrix shape does not match the test graph");
  }
  return full_rank_eval([&](Index u, std::span<double> out) {
    const auto r = scores.row(u);
    std::copy(r.begin(), r.end(), out.begin());
  }, exclude, test, n, workers);
}

RankingMetrics full_rank_eval(const Matrix& user_out, const Matrix& item_out, const InteractionGraph& exclude,
                              const InteractionGraph& test, std::size_t n, std::size_t workers) {
  if (user_out.rows() < test.num_users() || item_out.rows() < test.num_items() ||
      user_out.cols() != item_out.cols()) {
    throw ContractViolation("embedding shapes do not match the test graph");
  }
  return full_rank_eval([&](Index u, std::span<double> out) {
    const auto ur = user_out.row(u);
    for (Index v = 0; v < out.size(); ++v) out[v] = dot(ur, item_out.row(v));
  }, exclude, test, n, workers);
}

double random_ranking_recall(const InteractionGraph& exclude, const InteractionGraph& test, std::size_t n) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Index u = 0; u < test.num_users(); ++u) {
    if (test.items_of(u).empty()) continue;
    const std::size_t excluded = u < exclude.num_users() ? exclude.items_of(u).size() : 0;
    const std::size_t c = test.num_items() - excluded;
    sum += c == 0 ? 0.0 : static_cast<double>(std::min(n, c)) / static_cast<double>(c);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

RankingMetrics popularity_eval(const InteractionGraph& train, const InteractionGraph& test, std::size_t n,
                               std::size_t workers) {
  std::vector<double> pop(test.num_items(), 0.0);
  for (Index v = 0; v < std::min(train.num_items(), test.num_items()); ++v) {
    pop[v] = static_cast<double>(train.item_degree(v));
  }
  return full_rank_eval([&](Index, std::span<double> out) { std::copy(pop.begin(), pop.end(), out.begin()); },
                        train, test, n, workers);
}

}  // namespace kgrec
