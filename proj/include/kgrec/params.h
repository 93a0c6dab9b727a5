#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kgrec/rng.h"
#include "kgrec/tensor.h"

namespace kgrec {

// Two-layer projection head: z = sigmoid(x W1 + b1) W2 + b2.
struct MlpParams {
  Matrix w1, b1, w2, b2;
};

struct ParamShape {
  std::size_t dim = 64;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  bool separate_cf_tables = false;  // LightGCN view owns its own user/item tables
};

// Every trainable tensor plus Adam state. Gradients and moments are stored as
// vectors aligned with tensors().
struct ParamStore {
  std::size_t dim = 0;
  Matrix entity_embed;    // |E| x d, rows [0, num_items) are the items
  Matrix relation_embed;  // |R| x d
  Matrix user_embed;      // |U| x d
  Matrix attn_q;          // d x d
  Matrix attn_k;          // d x d
  MlpParams mlp_u;
  MlpParams mlp_k;
  Matrix cf_user_embed;  // empty unless separate_cf_tables
  Matrix cf_item_embed;

  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
  std::uint64_t step = 0;

  // Xavier-uniform weights and embeddings, zero biases, zero moments.
  static ParamStore init(const ParamShape& shape, Rng& rng);

  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  bool all_finite() const;
  void reset_optimizer();
};

using Gradients = std::vector<Matrix>;

// Zero gradients shaped like params.tensors().
Gradients zero_gradients(const ParamStore& params);

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& tensor, std::size_t index)
      : std::runtime_error("non-finite gradient in tensor '" + tensor + "' at flat index " +
                           std::to_string(index)),
        tensor_(tensor) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled: p <- p * (1 - lr * wd) before the Adam delta
};

// Bias-corrected Adam. Validates every gradient before touching any parameter.
void adam_step(ParamStore& params, const Gradients& grads, const AdamConfig& cfg);

struct TensorGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<TensorGradCheck> tensors;
  double tolerance = 0.0;
  bool pass = true;
};

// Returns the loss; fills grads (aligned with tensors()) when non-null.
using LossWithGrad = std::function<double(const ParamStore&, Gradients*)>;

// Central differences (L(p+eps) - L(p-eps)) / 2eps over every coordinate.
// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const LossWithGrad& fn, const ParamStore& params, double tol, double eps = 1e-5,
                           double floor = 1e-3);

}  // namespace kgrec
