#include "kgrec/evalkit.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kgrec/model.h"
#include "kgrec/rationale.h"

namespace kgrec {

GroupingKind parse_grouping(const std::string& s) {
  if (s == "user-degree" || s == "degree" || s == "user_degree") return GroupingKind::kUserDegree;
  if (s == "item-sparsity" || s == "sparsity" || s == "item_sparsity") return GroupingKind::kItemSparsity;
  throw ConfigError("unknown grouping kind '" + s + "' (expected user-degree or item-sparsity)");
}

std::string grouping_name(GroupingKind k) {
  return k == GroupingKind::kUserDegree ? "user-degree" : "item-sparsity";
}

double grouping_statistic(const InteractionGraph& train, Index u, GroupingKind kind) {
  const auto items = train.items_of(u);
  if (kind == GroupingKind::kUserDegree) return static_cast<double>(items.size());
  if (items.empty()) return 0.0;
  double s = 0.0;
  for (Index v : items) s += static_cast<double>(train.item_degree(v));
  return s / static_cast<double>(items.size());
}

GroupReport group_eval(const RankingMetrics& per_user, const InteractionGraph& train, GroupingKind kind,
                       std::size_t num_groups) {
  GroupReport rep;
  rep.kind = kind;
  const std::size_t n = per_user.per_user.size();
  if (n == 0) return rep;
  if (num_groups == 0) throw ConfigError("num_groups must be positive");
  if (n < num_groups) {
    rep.warnings.push_back("only " + std::to_string(n) + " users for " + std::to_string(num_groups) +
                           " groups; using " + std::to_string(n));
    spdlog::warn("{}", rep.warnings.back());
    num_groups = n;
  }
  std::vector<double> stat(n);
  for (std::size_t i = 0; i < n; ++i) stat[i] = grouping_statistic(train, per_user.per_user[i].user, kind);
  std::vector<double> sorted = stat;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < num_groups; ++k) rep.boundaries.push_back(sorted[k * n / num_groups]);

  std::vector<GroupMetrics> g(num_groups);
  for (std::size_t k = 0; k < num_groups; ++k) {
    g[k].lower = k == 0 ? sorted.front() : rep.boundaries[k - 1];
    g[k].upper = k + 1 == num_groups ? std::nextafter(sorted.back(), INFINITY) : rep.boundaries[k];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(
        std::upper_bound(rep.boundaries.begin(), rep.boundaries.end(), stat[i]) - rep.boundaries.begin());
    g[k].users += 1;
    g[k].recall += per_user.per_user[i].recall;
    g[k].ndcg += per_user.per_user[i].ndcg;
  }
  for (auto& x : g) {
    if (x.users == 0) continue;
    x.recall /= static_cast<double>(x.users);
    x.ndcg /= static_cast<double>(x.users);
    rep.groups.push_back(x);
  }
  return rep;
}

KnowledgeGraph subsample_kg(const KnowledgeGraph& kg, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("keep ratio must lie in (0, 1]");
  const std::vector<Triplet> base = kg.base_triplets();
  const auto keep = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(base.size()) + 1e-9));
  if (keep == 0) throw ConfigError("keep ratio " + std::to_string(ratio) + " retains no triplets");
  Rng rng = make_rng(seed, {kStreamSubsample, static_cast<std::uint64_t>(std::llround(ratio * 1e6))});
  std::vector<Triplet> kept;
  for (std::size_t id : uniform_subset(base.size(), keep, rng)) kept.push_back(base[id]);
  return KnowledgeGraph::from_triplets(kg.num_entities(), kg.num_base_relations(), std::move(kept),
                                       kg.inverse_augmented());
}

PartialKgRow partial_kg_row(const KgEvalFactory& factory, const KnowledgeGraph& kg, double ratio,
                            std::uint64_t seed, const RankingMetrics& reference) {
  PartialKgRow row;
  row.ratio = ratio;
  if (ratio == 1.0) {
    row.base_triplets = kg.num_base_triplets();
    row.metrics = reference;
  } else {
    const KnowledgeGraph sub = subsample_kg(kg, ratio, seed);
    row.base_triplets = sub.num_base_triplets();
    row.metrics = factory(sub);
  }
  row.recall_retention = reference.recall > 0 ? row.metrics.recall / reference.recall : 0.0;
  row.ndcg_retention = reference.ndcg > 0 ? row.metrics.ndcg / reference.ndcg : 0.0;
  return row;
}

std::vector<PartialKgRow> partial_kg_eval(const KgEvalFactory& factory, const KnowledgeGraph& kg,
                                          const std::vector<double>& ratios, std::uint64_t seed) {
  for (double r : ratios) subsample_kg(kg, r, seed);  // reject bad ratios before any expensive work
  const RankingMetrics reference = factory(kg);
  std::vector<PartialKgRow> rows;
  for (double r : ratios) rows.push_back(partial_kg_row(factory, kg, r, seed, reference));
  return rows;
}

TrainConfig apply_variant(TrainConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "no_mae") {
    cfg.lambda1 = 0.0;
    cfg.k_m = 0;
  } else if (variant == "random_mask") {
    cfg.mask_mode = SelectionMode::kRandom;
  } else if (variant == "no_cl") {
    cfg.lambda2 = 0.0;
  } else if (variant == "random_aug") {
    cfg.aug_mode = SelectionMode::kRandom;
  } else {
    throw ConfigError("unknown ablation variant '" + variant +
                      "' (expected no_mae, random_mask, no_cl or random_aug)");
  }
  return cfg;
}

RankingMetrics evaluate_test(const TrainConfig& cfg, const ParamStore& params, const Dataset& data,
                             const InteractionGraph& test) {
  const EncodedModel em =
      encode_for_eval(params, data.kg, data.train, {cfg.layers, cfg.include_layer0}, false);
  return full_rank_eval(em.user_out, em.entity_out, data.train, test, cfg.topn, cfg.workers);
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

}  // namespace

AblationTable ablate(const TrainConfig& cfg, const DatasetFactory& data, const std::vector<std::string>& variants,
                     const std::vector<std::uint64_t>& seeds) {
  AblationTable table;
  table.seeds = seeds;
  std::vector<std::string> all{"full"};
  for (const auto& v : variants) {
    apply_variant(cfg, v);
    if (v != "full") all.push_back(v);
  }
  std::vector<Dataset> sets;
  for (auto s : seeds) sets.push_back(data(s));
  for (const auto& v : all) {
    AblationRow row;
    row.variant = v;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      TrainConfig c = apply_variant(cfg, v);
      c.seed = seeds[i];
      const TrainState st = run_training(c, sets[i]);
      const RankingMetrics m = evaluate_test(c, st.best_params, sets[i], sets[i].test);
      row.recall.push_back(m.recall);
      row.ndcg.push_back(m.ndcg);
      spdlog::info("ablation {} seed {}: recall={:.4f} ndcg={:.4f}", v, seeds[i], m.recall, m.ndcg);
    }
    mean_std(row.recall, row.recall_mean, row.recall_std);
    mean_std(row.ndcg, row.ndcg_mean, row.ndcg_std);
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string relation_name(Index r, const KnowledgeGraph& kg, const std::vector<std::string>& names) {
  const std::size_t base = kg.num_base_relations();
  const bool inv = kg.inverse_augmented() && r >= base;
  const Index b = inv ? static_cast<Index>(r - base) : r;
  std::string n = b < names.size() ? names[b] : "r" + std::to_string(b);
  return inv ? n + " (inverse)" : n;
}

std::vector<RelationScore> relation_means(const KnowledgeGraph& kg, const std::vector<double>& gamma,
                                          const std::vector<std::string>& names,
                                          const std::function<bool(const Triplet&)>& keep) {
  std::vector<double> sum(kg.num_relations(), 0.0);
  std::vector<std::size_t> count(kg.num_relations(), 0);
  for (TripletId id = 0; id < kg.num_triplets(); ++id) {
    const Triplet& t = kg.triplet(id);
    if (!keep(t)) continue;
    sum[t.relation] += gamma[id];
    ++count[t.relation];
  }
  std::vector<RelationScore> out;
  for (Index r = 0; r < kg.num_relations(); ++r) {
    if (count[r] == 0) continue;
    RelationScore rs;
    rs.relation = r;
    rs.name = relation_name(r, kg, names);
    rs.inverse = kg.inverse_augmented() && r >= kg.num_base_relations();
    rs.triplets = count[r];
    rs.mean_gamma = sum[r] / static_cast<double>(count[r]);
    out.push_back(rs);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RelationScore& a, const RelationScore& b) { return a.mean_gamma > b.mean_gamma; });
  return out;
}

}  // namespace

RationaleReport rationale_report(const ParamStore& params, const KnowledgeGraph& kg,
                                 const std::vector<std::string>& relation_names,
                                 const std::vector<int>& item_category,
                                 const std::vector<std::string>& category_names) {
  RationaleReport rep;
  const RationaleScores sc = score_all(kg, params);
  rep.relations = relation_means(kg, sc.gamma, relation_names, [](const Triplet&) { return true; });
  if (!sc.gamma.empty()) {
    rep.global_mean_gamma =
        std::accumulate(sc.gamma.begin(), sc.gamma.end(), 0.0) / static_cast<double>(sc.gamma.size());
  }
  std::set<int> cats(item_category.begin(), item_category.end());
  for (int c : cats) {
    if (c < 0) continue;
    CategoryBreakdown cb;
    cb.category = static_cast<std::size_t>(c) < category_names.size() ? category_names[c] : std::to_string(c);
    cb.relations = relation_means(kg, sc.gamma, relation_names, [&](const Triplet& t) {
      return t.head < item_category.size() && item_category[t.head] == c;
    });
    rep.categories.push_back(std::move(cb));
  }
  return rep;
}

ReconstructionProbe reconstruction_probe(const TrainConfig& cfg, const ParamStore& params, const KnowledgeGraph& kg,
                                         std::size_t k, std::uint64_t seed) {
  const RationaleScores sc = score_all(kg, params);
  const std::vector<TripletId> top = select_mask_set(sc.gamma, k);
  std::vector<TripletId> held = top;
  if (kg.inverse_augmented()) {
    const std::size_t half = kg.num_triplets() / 2;
    for (TripletId id : top) held.push_back(id < half ? id + half : id - half);
  }
  std::sort(held.begin(), held.end());
  held.erase(std::unique(held.begin(), held.end()), held.end());

  Tape tape;
  ParamVars p = bind_params(tape, params, false);
  const KgView view = make_kg_view(kg, ViewKind::kMaskedKg, held);
  Var logits = attention_logits(tape, p, kg);
  auto stack = kg_aggregate(tape, p.entity, p.relation, view, view_weights(tape, logits, view), cfg.layers);
  const Matrix& e = tape.value(encode_final(tape, stack, cfg.include_layer0));
  const Matrix& rel = params.relation_embed;

  auto score = [&](Index h, Index r, Index t) {
    double s = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) s += e(h, c) * e(t, c) * rel(r, c);
    return 1.0 / (1.0 + std::exp(-s));
  };
  std::set<Triplet> present(kg.triplets().begin(), kg.triplets().end());
  Rng rng = make_rng(seed, {kStreamEval, 0x9e37});
  std::vector<double> pos, neg;
  for (TripletId id : top) {
    const Triplet& t = kg.triplet(id);
    pos.push_back(score(t.head, t.relation, t.tail));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const auto tail = static_cast<Index>(uniform_index(rng, kg.num_entities()));
      if (tail == t.head || present.count({t.head, t.relation, tail})) continue;
      neg.push_back(score(t.head, t.relation, tail));
      break;
    }
  }
  ReconstructionProbe pr;
  pr.positives = pos.size();
  if (pos.empty() || neg.empty()) return pr;
  pr.mean_sigmoid = std::accumulate(pos.begin(), pos.end(), 0.0) / static_cast<double>(pos.size());
  pr.mean_sigmoid_negative = std::accumulate(neg.begin(), neg.end(), 0.0) / static_cast<double>(neg.size());
  double wins = 0.0;
  for (double a : pos) {
    for (double b : neg) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  pr.auc = wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  return pr;
}

std::string format_metrics(const RankingMetrics& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << "recall@" << m.n << "=" << m.recall << "\nndcg@" << m.n << "="
     << m.ndcg << "\nusers_evaluated=" << m.users_evaluated << "\nusers_skipped=" << m.users_skipped << "\n";
  return os.str();
}

std::string format_group_report(const GroupReport& r) {
  std::ostringstream os;
  os << "grouping: " << grouping_name(r.kind) << "\n";
  os << std::left << std::setw(8) << "group" << std::setw(24) << "range" << std::setw(8) << "users" << std::setw(12)
     << "recall" << "ndcg\n";
  os << std::fixed;
  for (std::size_t g = 0; g < r.groups.size(); ++g) {
    std::ostringstream range;
    range << std::setprecision(2) << std::fixed << "[" << r.groups[g].lower << ", " << r.groups[g].upper << ")";
    os << std::setw(8) << g << std::setw(24) << range.str() << std::setw(8) << r.groups[g].users
       << std::setprecision(6) << std::setw(12) << r.groups[g].recall << r.groups[g].ndcg << "\n";
  }
  return os.str();
}

std::string format_partial_kg(const std::vector<PartialKgRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "ratio" << std::setw(12) << "triplets" << std::setw(12) << "recall"
     << std::setw(12) << "ndcg" << std::setw(12) << "ret_recall" << "ret_ndcg\n"
     << std::fixed;
  for (const auto& r : rows) {
    os << std::setprecision(2) << std::setw(8) << r.ratio << std::setw(12) << r.base_triplets << std::setprecision(6)
       << std::setw(12) << r.metrics.recall << std::setw(12) << r.metrics.ndcg << std::setw(12)
       << r.recall_retention << r.ndcg_retention << "\n";
  }
  return os.str();
}

std::string format_ablation(const AblationTable& t) {
  std::ostringstream os;
  os << "seeds:";
  for (auto s : t.seeds) os << " " << s;
  os << "\n" << std::left << std::setw(14) << "variant" << std::setw(22) << "recall@20 mean+-sd" << "ndcg@20 mean+-sd\n"
     << std::fixed << std::setprecision(4);
  for (const auto& r : t.rows) {
    std::ostringstream rc, nd;
    rc << std::fixed << std::setprecision(4) << r.recall_mean << " +- " << r.recall_std;
    nd << std::fixed << std::setprecision(4) << r.ndcg_mean << " +- " << r.ndcg_std;
    os << std::setw(14) << r.variant << std::setw(22) << rc.str() << nd.str() << "\n";
  }
  return os.str();
}

std::string format_rationale_report(const RationaleReport& r) {
  std::ostringstream os;
  auto table = [&](const std::vector<RelationScore>& rows) {
    os << std::left << std::setw(6) << "rel" << std::setw(32) << "name" << std::setw(10) << "triplets"
       << "mean_gamma\n";
    for (const auto& x : rows) {
      os << std::setw(6) << x.relation << std::setw(32) << x.name << std::setw(10) << x.triplets << std::fixed
         << std::setprecision(6) << x.mean_gamma << "\n";
    }
  };
  os << "global mean gamma: " << std::fixed << std::setprecision(6) << r.global_mean_gamma << "\n";
  table(r.relations);
  for (const auto& c : r.categories) {
    os << "\ncategory " << c.category << "\n";
    table(c.relations);
  }
  return os.str();
}

}  // namespace kgrec
