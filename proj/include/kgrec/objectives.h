#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kgrec/errors.h"
#include "kgrec/graphstore.h"
#include "kgrec/rng.h"
#include "kgrec/tape.h"

namespace kgrec {

struct LossBundle {
  double l_rec = 0.0;
  double l_m = 0.0;
  double l_c = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double tau = 0.0;
};

// total = l_rec + lambda1 * l_m + lambda2 * l_c + l2
LossBundle joint_loss(double l_rec, double l_m, double l_c, double l2, double lambda1, double lambda2,
                      double tau);

// -log(sigmoid(x)), stable for large |x|.
double neg_log_sigmoid(double x);

enum class Reduction { kSum, kMean };

// sum over masked triplets of -log sigmoid(e_h . (e_t (*) e_r)); 0 for an empty mask.
Var reconstruction_loss(Tape& tape, const KnowledgeGraph& kg, std::span<const TripletId> mask, Var entity_out,
                        Var relation, Reduction reduction = Reduction::kSum);

// Two negatives per anchor, each drawn uniformly from `items` without the anchor.
std::vector<std::array<Index, 2>> sample_contrastive_negatives(std::span<const Index> items, Rng& rng);

struct ContrastiveOptions {
  double tau = 0.2;
  // Denominator as printed: sum over j in {v, v', v''} of (e^{pos} + e^{s_j}).
  bool literal_denominator = false;
  Reduction reduction = Reduction::kSum;
};

// z_u, z_k hold one row per item (unnormalised); rows are L2-normalised here
// so the similarities are cosines.
Var contrastive_loss(Tape& tape, Var z_u, Var z_k, std::span<const Index> items,
                     std::span<const std::array<Index, 2>> negatives, const ContrastiveOptions& opts);

// Per-item contrastive terms from plain matrices, with the realised similarities.
struct ContrastiveTerms {
  std::vector<double> loss;
  std::vector<double> pos;
  std::vector<std::array<double, 2>> neg;
};
ContrastiveTerms contrastive_terms(const Matrix& z_u, const Matrix& z_k, std::span<const Index> items,
                                   std::span<const std::array<Index, 2>> negatives, const ContrastiveOptions& opts);

// -1/tau + log(e^{1/tau} + sum_i e^{s_i/tau}): the value at perfect alignment.
// The literal denominator weights the e^{1/tau} term by 4.
double contrastive_lower_bound(std::span<const double> negative_sims, double tau, bool literal_denominator = false);

// sum of -log sigmoid(pos - neg).
Var bpr_loss(Tape& tape, Var scores_pos, Var scores_neg, Reduction reduction = Reduction::kSum);

struct AUReport {
  double alignment = 0.0;   // mean ||x - y||^2 over positive pairs
  double uniformity = 0.0;  // log mean exp(-2 ||x - y||^2) over sample pairs
  std::size_t positive_pairs = 0;
  std::size_t uniformity_pairs = 0;
};

class UndefinedReport : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// x, y: positive pairs row by row; sample: rows for the uniformity term. All
// rows are expected to be unit length. Uses every distinct pair of `sample`
// up to max_pairs, otherwise max_pairs random pairs drawn with `seed`.
AUReport alignment_uniformity(const Matrix& x, const Matrix& y, const Matrix& sample,
                              std::size_t max_pairs = 200000, std::uint64_t seed = 0);

Matrix normalize_rows(const Matrix& m, double eps = 1e-12);

}  // namespace kgrec
