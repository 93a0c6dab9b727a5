#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgrec/config.h"
#include "kgrec/graphstore.h"
#include "kgrec/params.h"
#include "kgrec/rng.h"

namespace kgrec {

struct SuiteResult {
  std::string name;
  bool pass = true;
  std::size_t checks = 0;
  double worst_error = 0.0;
  std::vector<std::string> failures;
  double seconds = 0.0;
};

struct SelfcheckOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 7;
  bool inject_gradient_fault = false;  // corrupts one analytic gradient; the gradcheck suite must notice
};

// Random graphs for property tests. Every entity id is < num_entities.
KnowledgeGraph random_kg(std::size_t num_entities, std::size_t num_relations, std::size_t num_triplets,
                         bool add_inverse, Rng& rng);
InteractionGraph random_interactions(std::size_t num_users, std::size_t num_items, double density, Rng& rng);

// The tiny instance used for gradient checks: 8 users, 6 items, 16 entities, d = 8.
struct GradcheckInstance {
  TrainConfig cfg;
  InteractionGraph train;
  KnowledgeGraph kg;
  ParamStore params;
};
GradcheckInstance make_gradcheck_instance(std::uint64_t seed);

struct LossGradcheck {
  std::string loss;  // rec, mae, contrast, joint
  double max_rel_error = 0.0;
  std::string worst_tensor;
  bool pass = true;
};
std::vector<LossGradcheck> gradcheck_losses(const GradcheckInstance& inst, double tol,
                                            bool inject_fault = false);

SuiteResult run_gradcheck_suite(const SelfcheckOptions& opts);
SuiteResult run_dense_suite(const SelfcheckOptions& opts);
SuiteResult run_metrics_suite(const SelfcheckOptions& opts);
SuiteResult run_rationale_suite(const SelfcheckOptions& opts);
SuiteResult run_losses_suite(const SelfcheckOptions& opts);

std::vector<std::string> suite_names();
SuiteResult run_suite(const std::string& name, const SelfcheckOptions& opts);

}  // namespace kgrec
