#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgrec/config.h"
#include "kgrec/dataset.h"
#include "kgrec/metrics.h"
#include "kgrec/model.h"
#include "kgrec/objectives.h"
#include "kgrec/params.h"
#include "kgrec/rationale.h"

namespace kgrec {

struct BprTriple {
  Index user = 0;
  Index pos = 0;
  Index neg = 0;
  auto operator<=>(const BprTriple&) const = default;
};

struct BprSampleStats {
  std::size_t saturated_users = 0;  // interacted with every item, never sampled
  std::size_t fallback_scans = 0;   // rejection sampling gave up after 100 retries
};

// Users are drawn uniformly among those with at least one interaction and at
// least one non-interacted item.
std::vector<BprTriple> sample_bpr_batch(const InteractionGraph& train, std::size_t batch_size, Rng& rng,
                                        BprSampleStats* stats = nullptr);

// Non-finite loss during a step; what() lists every loss component.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const LossBundle& losses, std::uint64_t step);
  const LossBundle& losses() const { return losses_; }

 private:
  LossBundle losses_;
};

// Graphs and derived views that stay fixed for a whole run.
struct TrainContext {
  TrainContext(const TrainConfig& cfg, const InteractionGraph& train, const KnowledgeGraph& kg);

  const TrainConfig& cfg;
  const InteractionGraph& train;
  const KnowledgeGraph& kg;
  UiView full_ui;
  KgView full_kg;
  std::size_t rho_u = 0;
  ModelOptions model_opts() const { return {cfg.layers, cfg.include_layer0}; }
};

// Every discrete choice of one step: the rationale sets, the three graph
// views, the BPR batch and the contrastive anchors with their negatives.
struct StepPlan {
  std::uint64_t step = 0;
  RationaleState rationale;
  KgView masked_kg;
  KgView augmented_kg;
  UiView augmented_ui;
  std::vector<BprTriple> batch;
  std::vector<Index> contrast_items;
  std::vector<std::array<Index, 2>> contrast_negatives;
};

StepPlan plan_step(const TrainContext& ctx, const ParamStore& params, std::uint64_t step);

struct StepResult {
  LossBundle losses;
  double objective = 0.0;  // the differentiated part: l_rec + lambda1 l_m + lambda2 l_c
  Gradients grads;         // empty unless requested
};

// Multipliers of the three differentiated terms; defaults to (1, lambda1, lambda2).
struct LossWeights {
  double rec = 1.0;
  double mae = 0.0;
  double contrast = 0.0;
};

// Continuous part of a step for a fixed plan. Terms with zero weight are not computed.
StepResult compute_step(const TrainContext& ctx, const ParamStore& params, const StepPlan& plan,
                        bool with_grads, std::optional<LossWeights> weights = std::nullopt);

ParamStore init_params(const TrainConfig& cfg, const InteractionGraph& train, const KnowledgeGraph& kg);

// Plans, computes and applies one Adam update. An empty batch skips the update.
LossBundle train_step(ParamStore& params, const TrainContext& ctx);

struct EvalRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double l_rec = 0.0;
  double l_m = 0.0;
  double l_c = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double alignment = 0.0;
  double uniformity = 0.0;
  std::size_t bound_checked = 0;
  std::size_t bound_violations = 0;
  double min_bound_gap = 0.0;  // min over checked items of loss - lower bound
};

// One JSON object per line.
std::string to_json_line(const EvalRecord& r);

struct TrainState {
  ParamStore params;
  std::size_t epoch = 0;
  std::uint64_t root_seed = 0;
  double best_recall = -1.0;
  std::size_t best_epoch = 0;
  ParamStore best_params;
  std::vector<EvalRecord> history;
  std::size_t evals_since_improvement = 0;
  bool early_stopped = false;
};

// Validation record for the current parameters: ranking on `valid` with
// training items excluded, alignment/uniformity of the two item views, and
// the InfoNCE lower-bound check on every item.
EvalRecord evaluate_epoch(const TrainContext& ctx, const ParamStore& params, const InteractionGraph& valid,
                          std::size_t epoch);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir{};  // best.ckpt, last.ckpt, metrics.jsonl
  std::optional<std::filesystem::path> resume_from{};
  std::function<void(const EvalRecord&)> on_eval{};
};

TrainState run_training(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opts = {});

}  // namespace kgrec
