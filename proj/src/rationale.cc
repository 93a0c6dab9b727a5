#include "kgrec/rationale.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "kgrec/tape.h"

namespace kgrec {

RationaleScores score_all(const KnowledgeGraph& kg, const ParamStore& params) {
  const std::size_t d = params.dim;
  const Matrix q = matmul(params.entity_embed, params.attn_q);
  const Matrix k = matmul(params.entity_embed, params.attn_k);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  RationaleScores s;
  const std::size_t n = kg.num_triplets();
  s.f.resize(n);
  s.omega.resize(n);
  s.gamma.resize(n);
  const auto& offsets = kg.head_offsets();
  const auto& entries = kg.head_entries();
  std::vector<double> seg_f(entries.size());
  for (Index h = 0; h < kg.num_entities(); ++h) {
    auto qh = q.row(h);
    for (std::size_t i = offsets[h]; i < offsets[h + 1]; ++i) {
      auto kt = k.row(entries[i].tail);
      auto er = params.relation_embed.row(entries[i].relation);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += qh[j] * kt[j] * er[j];
      seg_f[i] = acc * inv_sqrt_d;
    }
  }
  const std::vector<double> seg_w = segment_softmax(seg_f, offsets);
  for (Index h = 0; h < kg.num_entities(); ++h) {
    const double deg = static_cast<double>(offsets[h + 1] - offsets[h]);
    for (std::size_t i = offsets[h]; i < offsets[h + 1]; ++i) {
      const TripletId id = entries[i].id;
      s.f[id] = seg_f[i];
      s.omega[id] = seg_w[i];
      s.gamma[id] = deg * seg_w[i];
    }
  }
  return s;
}

double gumbel_shift(double gamma, double eps) {
  eps = std::clamp(eps, kGumbelEpsMin, 1.0 - kGumbelEpsMin);
  return gamma - std::log(-std::log(eps));
}

std::vector<double> gumbel_perturb(std::span<const double> gamma, Rng& rng, bool enabled) {
  std::vector<double> out(gamma.begin(), gamma.end());
  if (!enabled) return out;
  for (double& g : out) g = gumbel_shift(g, uniform_open01(rng));
  return out;
}

namespace {

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k, bool largest) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto cmp = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return largest ? scores[a] > scores[b] : scores[a] < scores[b];
    return a < b;
  };
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), cmp);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<TripletId> select_mask_set(std::span<const double> gamma_noisy, std::size_t k_m) {
  if (k_m > gamma_noisy.size()) {
    throw ConfigError("k_m (" + std::to_string(k_m) + ") exceeds triplet count (" +
                      std::to_string(gamma_noisy.size()) + ")");
  }
  return top_k(gamma_noisy, k_m, true);
}

std::size_t noise_set_size(std::size_t num_triplets, double rho_k) {
  if (!(rho_k >= 0.0 && rho_k < 1.0)) throw ConfigError("rho_k must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(rho_k * static_cast<double>(num_triplets)));
}

std::vector<TripletId> select_noise_set(std::span<const double> gamma_noisy, double rho_k) {
  return top_k(gamma_noisy, noise_set_size(gamma_noisy.size(), rho_k), false);
}

std::vector<std::size_t> uniform_subset(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ConfigError("cannot draw " + std::to_string(k) + " of " + std::to_string(n));
  // Partial Fisher-Yates.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<double> item_noise_scores(const KnowledgeGraph& kg, std::span<const double> gamma_noisy,
                                      std::size_t num_items) {
  std::vector<double> sum(num_items, 0.0);
  std::vector<std::size_t> cnt(num_items, 0);
  double total = 0.0;
  for (TripletId id = 0; id < kg.num_triplets(); ++id) {
    const Triplet& t = kg.triplet(id);
    const double g = gamma_noisy[id];
    total += g;
    if (t.head < num_items) {
      sum[t.head] += g;
      ++cnt[t.head];
    }
    if (t.tail < num_items && t.tail != t.head) {
      sum[t.tail] += g;
      ++cnt[t.tail];
    }
  }
  const double global = kg.num_triplets() ? total / static_cast<double>(kg.num_triplets()) : 0.0;
  std::vector<double> phi(num_items);
  for (std::size_t v = 0; v < num_items; ++v) {
    phi[v] = cnt[v] ? sum[v] / static_cast<double>(cnt[v]) : global;
  }
  return phi;
}

std::vector<EdgeId> sample_ui_dropout(std::span<const double> phi, const InteractionGraph& interactions,
                                      std::size_t rho_u, Rng& rng, bool literal_softmax) {
  const std::size_t n = interactions.num_edges();
  if (rho_u == 0) return {};
  if (rho_u >= n) {
    throw ConfigError("rho_u (" + std::to_string(rho_u) + ") must be smaller than the edge count (" +
                      std::to_string(n) + ")");
  }
  // Gumbel-top-k over log-weights draws a without-replacement multinomial
  // sample; the softmax normaliser is a shared constant and drops out.
  const double sign = literal_softmax ? 1.0 : -1.0;
  std::vector<double> keys(n);
  const auto& edges = interactions.edges();
  for (EdgeId e = 0; e < n; ++e) {
    keys[e] = gumbel_shift(sign * phi[edges[e].second], uniform_open01(rng));
  }
  return top_k(keys, rho_u, true);
}

RationaleState rationalize(const KnowledgeGraph& kg, const InteractionGraph& interactions,
                           const ParamStore& params, const RationaleOptions& opts, std::uint64_t seed) {
  RationaleState st;
  st.rng_seed = seed;
  auto scores = score_all(kg, params);
  st.f = std::move(scores.f);
  st.omega = std::move(scores.omega);
  st.gamma = std::move(scores.gamma);

  Rng gumbel_rng = make_rng(seed, {kStreamGumbel});
  st.gamma_noisy = gumbel_perturb(st.gamma, gumbel_rng, opts.gumbel_noise);

  const std::size_t T = kg.num_triplets();
  Rng select_rng = make_rng(seed, {kStreamDropout});
  if (opts.mask_mode == SelectionMode::kRationale) {
    st.mask_set = select_mask_set(st.gamma_noisy, opts.k_m);
  } else {
    if (opts.k_m > T) select_mask_set(st.gamma_noisy, opts.k_m);  // throws the same error
    st.mask_set = uniform_subset(T, opts.k_m, select_rng);
  }

  st.phi = item_noise_scores(kg, st.gamma_noisy, interactions.num_items());
  if (opts.aug_mode == SelectionMode::kRationale) {
    st.kg_noise_set = select_noise_set(st.gamma_noisy, opts.rho_k);
    st.ui_drop_set = sample_ui_dropout(st.phi, interactions, opts.rho_u, select_rng, opts.literal_phi_softmax);
  } else {
    st.kg_noise_set = uniform_subset(T, noise_set_size(T, opts.rho_k), select_rng);
    if (opts.rho_u >= interactions.num_edges() && opts.rho_u > 0) {
      throw ConfigError("rho_u must be smaller than the edge count");
    }
    st.ui_drop_set = uniform_subset(interactions.num_edges(), opts.rho_u, select_rng);
  }
  return st;
}

void write_rationale_dump(std::ostream& os, const KnowledgeGraph& kg, const RationaleScores& scores) {
  os << "triplet\thead\trelation\ttail\tf\tomega\tgamma\n";
  for (TripletId id = 0; id < kg.num_triplets(); ++id) {
    const Triplet& t = kg.triplet(id);
    os << id << '\t' << t.head << '\t' << t.relation << '\t' << t.tail << '\t' << scores.f[id] << '\t'
       << scores.omega[id] << '\t' << scores.gamma[id] << '\n';
  }
}

}  // namespace kgrec
