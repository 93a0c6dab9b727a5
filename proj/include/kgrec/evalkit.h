#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kgrec/config.h"
#include "kgrec/dataset.h"
#include "kgrec/metrics.h"
#include "kgrec/params.h"
#include "kgrec/trainer.h"

namespace kgrec {

enum class GroupingKind { kUserDegree, kItemSparsity };

GroupingKind parse_grouping(const std::string& s);
std::string grouping_name(GroupingKind k);

struct GroupMetrics {
  double lower = 0.0;  // statistic range [lower, upper)
  double upper = 0.0;
  std::size_t users = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct GroupReport {
  GroupingKind kind = GroupingKind::kUserDegree;
  std::vector<double> boundaries;  // num_groups - 1 cut values
  std::vector<GroupMetrics> groups;  // empty buckets dropped
  std::vector<std::string> warnings;
};

// Per-user grouping statistic from the training graph: the user's degree, or
// the mean training degree of the user's items.
double grouping_statistic(const InteractionGraph& train, Index u, GroupingKind kind);

// Cut values are the statistic at sorted positions floor(k N / G), k = 1..G-1;
// a user falls in group g when cut[g-1] <= stat < cut[g].
GroupReport group_eval(const RankingMetrics& per_user, const InteractionGraph& train, GroupingKind kind,
                       std::size_t num_groups = 5);

// floor(ratio * base triplets) base triplets drawn uniformly; inverses are
// re-derived when the source graph has them.
KnowledgeGraph subsample_kg(const KnowledgeGraph& kg, double ratio, std::uint64_t seed);

struct PartialKgRow {
  double ratio = 1.0;
  std::size_t base_triplets = 0;
  RankingMetrics metrics;
  double recall_retention = 1.0;
  double ndcg_retention = 1.0;
};

using KgEvalFactory = std::function<RankingMetrics(const KnowledgeGraph&)>;

PartialKgRow partial_kg_row(const KgEvalFactory& factory, const KnowledgeGraph& kg, double ratio,
                            std::uint64_t seed, const RankingMetrics& reference);
std::vector<PartialKgRow> partial_kg_eval(const KgEvalFactory& factory, const KnowledgeGraph& kg,
                                          const std::vector<double>& ratios, std::uint64_t seed);

// Variants: "full", "no_mae", "random_mask", "no_cl", "random_aug".
TrainConfig apply_variant(TrainConfig cfg, const std::string& variant);

struct AblationRow {
  std::string variant;
  std::vector<double> recall;  // one per seed
  std::vector<double> ndcg;
  double recall_mean = 0.0, recall_std = 0.0;
  double ndcg_mean = 0.0, ndcg_std = 0.0;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // "full" first
};

using DatasetFactory = std::function<Dataset(std::uint64_t seed)>;

// Trains every variant on every seed and scores the best-validation
// parameters on the test split.
AblationTable ablate(const TrainConfig& cfg, const DatasetFactory& data, const std::vector<std::string>& variants,
                     const std::vector<std::uint64_t>& seeds);

// Test-split metrics of a parameter set, encoded on the full graphs.
RankingMetrics evaluate_test(const TrainConfig& cfg, const ParamStore& params, const Dataset& data,
                             const InteractionGraph& test);

struct RelationScore {
  Index relation = 0;
  std::string name;
  bool inverse = false;
  std::size_t triplets = 0;
  double mean_gamma = 0.0;
};

struct CategoryBreakdown {
  std::string category;
  std::vector<RelationScore> relations;  // sorted by mean_gamma, descending
};

struct RationaleReport {
  std::vector<RelationScore> relations;  // sorted by mean_gamma, descending
  std::vector<CategoryBreakdown> categories;
  double global_mean_gamma = 0.0;
};

// Noise-free scores. Category sub-tables cover triplets whose head is an item
// with a known category.
RationaleReport rationale_report(const ParamStore& params, const KnowledgeGraph& kg,
                                 const std::vector<std::string>& relation_names = {},
                                 const std::vector<int>& item_category = {},
                                 const std::vector<std::string>& category_names = {});

struct ReconstructionProbe {
  std::size_t positives = 0;
  double mean_sigmoid = 0.0;  // over masked triplets
  double mean_sigmoid_negative = 0.0;
  double auc = 0.0;  // positives vs tail-corrupted non-edges, ties count 1/2
};

// Masks the k highest noise-free gamma triplets together with their inverse
// partners, encodes the remaining graph and scores the masked triplets against
// as many corrupted-tail triplets that are absent from the KG.
ReconstructionProbe reconstruction_probe(const TrainConfig& cfg, const ParamStore& params, const KnowledgeGraph& kg,
                                         std::size_t k, std::uint64_t seed);

std::string format_metrics(const RankingMetrics& m);
std::string format_group_report(const GroupReport& r);
std::string format_partial_kg(const std::vector<PartialKgRow>& rows);
std::string format_ablation(const AblationTable& t);
std::string format_rationale_report(const RationaleReport& r);

}  // namespace kgrec
