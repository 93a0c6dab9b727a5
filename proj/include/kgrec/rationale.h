#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "kgrec/errors.h"
#include "kgrec/graphstore.h"
#include "kgrec/params.h"
#include "kgrec/rng.h"

namespace kgrec {

// Per-triplet scores, indexed by TripletId.
struct RationaleScores {
  std::vector<double> f;      // bilinear attention logit
  std::vector<double> omega;  // softmax of f over the head's neighbours
  std::vector<double> gamma;  // |N_h| * omega, comparable across heads
};

RationaleScores score_all(const KnowledgeGraph& kg, const ParamStore& params);

inline constexpr double kGumbelEpsMin = 1e-12;

// gamma - log(-log(eps)) with eps clamped to [kGumbelEpsMin, 1 - kGumbelEpsMin].
double gumbel_shift(double gamma, double eps);
std::vector<double> gumbel_perturb(std::span<const double> gamma, Rng& rng, bool enabled = true);

// The k largest scores; ties go to the smaller index. Result is sorted ascending.
std::vector<TripletId> select_mask_set(std::span<const double> gamma_noisy, std::size_t k_m);
// The floor(rho_k * n) smallest scores, same tie-break. Result is sorted ascending.
std::vector<TripletId> select_noise_set(std::span<const double> gamma_noisy, double rho_k);
std::size_t noise_set_size(std::size_t num_triplets, double rho_k);

// k distinct ids drawn uniformly from [0, n), sorted ascending.
std::vector<std::size_t> uniform_subset(std::size_t n, std::size_t k, Rng& rng);

// Mean noisy score of the triplets touching each item (head or tail); items
// without triplets get the global mean.
std::vector<double> item_noise_scores(const KnowledgeGraph& kg, std::span<const double> gamma_noisy,
                                      std::size_t num_items);

// Draws rho_u interaction edges without replacement. Each edge inherits its
// item's probability softmax(-phi) (softmax(phi) when literal_softmax is set).
std::vector<EdgeId> sample_ui_dropout(std::span<const double> phi, const InteractionGraph& interactions,
                                      std::size_t rho_u, Rng& rng, bool literal_softmax = false);

enum class SelectionMode { kRationale, kRandom };

struct RationaleOptions {
  std::size_t k_m = 0;
  double rho_k = 0.0;
  std::size_t rho_u = 0;
  bool gumbel_noise = true;
  bool literal_phi_softmax = false;
  SelectionMode mask_mode = SelectionMode::kRationale;
  SelectionMode aug_mode = SelectionMode::kRationale;
};

struct RationaleState {
  std::vector<double> f, omega, gamma, gamma_noisy;
  std::vector<TripletId> mask_set;
  std::vector<TripletId> kg_noise_set;
  std::vector<double> phi;
  std::vector<EdgeId> ui_drop_set;
  std::uint64_t rng_seed = 0;
};

// One step's scoring, perturbation and set selection. A single Gumbel draw is
// shared by the mask set, the KG noise set and the item scores.
RationaleState rationalize(const KnowledgeGraph& kg, const InteractionGraph& interactions,
                           const ParamStore& params, const RationaleOptions& opts, std::uint64_t seed);

// TSV: triplet, head, relation, tail, f, omega, gamma.
void write_rationale_dump(std::ostream& os, const KnowledgeGraph& kg, const RationaleScores& scores);

}  // namespace kgrec
