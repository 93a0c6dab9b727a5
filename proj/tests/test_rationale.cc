#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "kgrec/errors.h"
#include "kgrec/oracles.h"
#include "kgrec/rationale.h"
#include "kgrec/selfcheck.h"

using namespace kgrec;

namespace {

ParamStore random_params(const KnowledgeGraph& kg, std::size_t users, std::size_t items, std::size_t d, Rng& rng) {
  return ParamStore::init({d, kg.num_entities(), kg.num_relations(), users, items, false}, rng);
}

std::vector<double> random_scores(std::size_t n, Rng& rng) {
  std::vector<double> s(n);
  for (auto& x : s) x = 4.0 * uniform_open01(rng);
  return s;
}

std::vector<TripletId> sorted_ids(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return {v.begin(), v.end()};
}

}  // namespace

TEST_SUITE("rationale") {
  TEST_CASE("equal logits give uniform omega and unit gamma") {
    const auto kg = KnowledgeGraph::from_triplets(6, 2, {{0, 0, 1}, {0, 1, 2}, {0, 0, 3}, {4, 1, 5}}, false);
    Rng rng(1);
    ParamStore p = random_params(kg, 1, 1, 4, rng);
    p.entity_embed.fill(0.0);
    const auto s = score_all(kg, p);
    for (TripletId i = 0; i < 3; ++i) {
      CHECK(s.omega[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
      CHECK(s.gamma[i] == doctest::Approx(1.0).epsilon(1e-15));
    }
    // Entity 4 has a single neighbour whatever the logit.
    p = random_params(kg, 1, 1, 4, rng);
    const auto s2 = score_all(kg, p);
    CHECK(s2.omega[3] == 1.0);
    CHECK(s2.gamma[3] == 1.0);
  }

  TEST_CASE("scores match the straight-line oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {20});
      const auto kg = random_kg(6, 2, 5, false, rng);
      const ParamStore p = random_params(kg, 1, 2, 5, rng);
      const auto s = score_all(kg, p);
      std::vector<double> f;
      std::vector<Index> heads;
      for (const auto& t : kg.triplets()) {
        f.push_back(oracle::attention_logit(p.entity_embed, p.relation_embed, p.attn_q, p.attn_k, t));
        heads.push_back(t.head);
      }
      const auto omega = oracle::head_softmax(heads, f);
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double n = static_cast<double>(std::count(heads.begin(), heads.end(), heads[i]));
        CHECK(std::abs(s.f[i] - f[i]) < 1e-10);
        CHECK(std::abs(s.omega[i] - omega[i]) < 1e-10);
        CHECK(std::abs(s.gamma[i] - n * omega[i]) < 1e-10);
      }
    }
  }

  TEST_CASE("per-head omega sums to one and gamma averages to one") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {21});
      const auto kg = random_kg(20, 3, 60, true, rng);
      const auto s = score_all(kg, random_params(kg, 1, 5, 6, rng));
      for (Index h = 0; h < kg.num_entities(); ++h) {
        const auto nb = kg.neighbors(h);
        if (nb.empty()) continue;
        double so = 0.0, sg = 0.0;
        for (const auto& n : nb) {
          so += s.omega[n.id];
          sg += s.gamma[n.id];
        }
        CHECK(std::abs(so - 1.0) < 1e-6);
        CHECK(std::abs(sg / static_cast<double>(nb.size()) - 1.0) < 1e-6);
      }
    }
  }

  TEST_CASE("gumbel fixed point, clamping and disabled noise") {
    CHECK(gumbel_shift(2.5, std::exp(-1.0)) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(std::isfinite(gumbel_shift(0.0, 0.0)));
    CHECK(std::isfinite(gumbel_shift(0.0, 1.0)));
    CHECK(gumbel_shift(0.0, 0.0) == gumbel_shift(0.0, kGumbelEpsMin));
    const std::vector<double> g{0.3, 1.7, -2.0};
    Rng rng(5);
    CHECK(gumbel_perturb(g, rng, false) == g);
  }

  TEST_CASE("gumbel noise has the Euler-Mascheroni mean") {
    const std::vector<double> zeros(100000, 0.0);
    Rng rng(2023);
    const auto noisy = gumbel_perturb(zeros, rng);
    const double mean = std::accumulate(noisy.begin(), noisy.end(), 0.0) / static_cast<double>(noisy.size());
    CHECK(std::abs(mean - 0.5772156649) < 0.01);
  }

  TEST_CASE("mask set examples") {
    const std::vector<double> g{3, 1, 2}, eq{1, 1, 1, 1};
    CHECK(select_mask_set(g, 2) == std::vector<TripletId>{0, 2});
    CHECK(select_mask_set(eq, 2) == std::vector<TripletId>{0, 1});
    CHECK(select_mask_set(g, 0).empty());
    CHECK_THROWS_AS(select_mask_set(g, 4), ConfigError);
  }

  TEST_CASE("noise set examples") {
    const std::vector<double> g{3, 1, 2};
    CHECK(select_noise_set(g, 0.0).empty());
    CHECK(select_noise_set(g, 0.4) == std::vector<TripletId>{1});
    CHECK(noise_set_size(10, 0.25) == 2);
    CHECK_THROWS_AS(select_noise_set(g, 1.0), ConfigError);
  }

  TEST_CASE("selection matches full-sort oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {22});
      auto s = random_scores(1000, rng);
      // Coarse values force plenty of ties.
      if (seed % 2 == 0) {
        for (auto& x : s) x = std::floor(x * 4.0);
      }
      CHECK(select_mask_set(s, 37) == sorted_ids(oracle::sort_top_k(s, 37, true)));
      const double rho = 0.5 * uniform_open01(rng);
      CHECK(select_noise_set(s, rho) ==
            sorted_ids(oracle::sort_top_k(s, static_cast<std::size_t>(std::floor(rho * 1000)), false)));
    }
  }

  TEST_CASE("selection is permutation equivariant") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {23});
      const auto s = random_scores(50, rng);
      std::vector<std::size_t> perm(50);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> ps(50);
      for (std::size_t i = 0; i < 50; ++i) ps[perm[i]] = s[i];
      for (const bool mask : {true, false}) {
        const auto a = mask ? select_mask_set(s, 7) : select_noise_set(s, 0.3);
        const auto b = mask ? select_mask_set(ps, 7) : select_noise_set(ps, 0.3);
        std::set<std::size_t> mapped;
        for (auto id : a) mapped.insert(perm[id]);
        CHECK(mapped == std::set<std::size_t>(b.begin(), b.end()));
      }
    }
  }

  TEST_CASE("item noise score examples") {
    const auto kg = KnowledgeGraph::from_triplets(6, 1, {{0, 0, 4}, {1, 0, 5}, {4, 0, 1}}, false);
    const std::vector<double> g{0.7, 1.0, 3.0};
    const auto phi = item_noise_scores(kg, g, 3);
    CHECK(phi[0] == doctest::Approx(0.7));
    CHECK(phi[1] == doctest::Approx(2.0));
    // Item 2 has no triplets and takes the global mean.
    CHECK(phi[2] == doctest::Approx((0.7 + 1.0 + 3.0) / 3.0));
  }

  TEST_CASE("item noise scores match full scan") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {24});
      const auto kg = random_kg(40, 3, 60, seed % 2 == 0, rng);
      const auto g = random_scores(kg.num_triplets(), rng);
      const auto phi = item_noise_scores(kg, g, 20);
      const double global = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
      for (Index v = 0; v < 20; ++v) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < kg.num_triplets(); ++i) {
          const auto& t = kg.triplet(i);
          if (t.head == v || t.tail == v) {
            sum += g[i];
            ++n;
          }
        }
        CHECK(std::abs(phi[v] - (n ? sum / static_cast<double>(n) : global)) < 1e-12);
      }
    }
  }

  TEST_CASE("dropout size and errors") {
    const auto ui = InteractionGraph::from_edges(2, 3, {{0, 0}, {0, 1}, {1, 2}});
    const std::vector<double> phi{0, 0, 0};
    Rng rng(3);
    CHECK(sample_ui_dropout(phi, ui, 0, rng).empty());
    const auto two = sample_ui_dropout(phi, ui, 2, rng);
    CHECK(two.size() == 2);
    CHECK(std::set<EdgeId>(two.begin(), two.end()).size() == 2);
    CHECK_THROWS_AS(sample_ui_dropout(phi, ui, 3, rng), ConfigError);
  }

  TEST_CASE("dropout is uniform when phi is constant") {
    const std::size_t n = 10, k = 3, trials = 10000;
    std::vector<std::pair<Index, Index>> e;
    for (Index v = 0; v < n; ++v) e.emplace_back(v % 4, v);
    const auto ui = InteractionGraph::from_edges(4, n, e);
    const std::vector<double> phi(n, 0.42);
    std::vector<std::size_t> hits(n, 0);
    Rng rng(17);
    for (std::size_t t = 0; t < trials; ++t) {
      for (auto id : sample_ui_dropout(phi, ui, k, rng)) ++hits[id];
    }
    const double p = static_cast<double>(k) / n;
    const double sigma = std::sqrt(p * (1 - p) / trials);
    for (auto h : hits) CHECK(std::abs(static_cast<double>(h) / trials - p) <= 3 * sigma);
  }

  TEST_CASE("dropout prefers the low-phi edge") {
    const auto ui = InteractionGraph::from_edges(2, 2, {{0, 0}, {1, 1}});
    const std::vector<double> phi{0.0, 10.0};
    Rng rng(8);
    std::size_t low = 0, high = 0;
    for (int t = 0; t < 10000; ++t) {
      low += sample_ui_dropout(phi, ui, 1, rng)[0] == 0;
      high += sample_ui_dropout(phi, ui, 1, rng, true)[0] == 1;
    }
    // Each side is a Bernoulli with p = e^10 / (1 + e^10); expected misses 0.45 per 10^4.
    CHECK(low >= 9995);
    CHECK(high >= 9995);
  }

  TEST_CASE("rationalize sizes, disjointness and determinism") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {25});
      const auto kg = random_kg(30, 3, 80, true, rng);
      const auto ui = random_interactions(8, 10, 0.4, rng);
      if (ui.num_edges() < 2) continue;
      const ParamStore p = random_params(kg, 8, 10, 6, rng);
      const std::size_t T = kg.num_triplets();
      RationaleOptions o;
      o.k_m = uniform_index(rng, T / 2 + 1);
      o.rho_k = 0.45 * uniform_open01(rng);
      o.rho_u = uniform_index(rng, ui.num_edges());
      const auto st = rationalize(kg, ui, p, o, seed);
      CHECK(st.mask_set.size() == o.k_m);
      CHECK(st.kg_noise_set.size() == noise_set_size(T, o.rho_k));
      CHECK(st.ui_drop_set.size() == o.rho_u);
      std::vector<TripletId> both;
      std::set_intersection(st.mask_set.begin(), st.mask_set.end(), st.kg_noise_set.begin(), st.kg_noise_set.end(),
                            std::back_inserter(both));
      CHECK(both.empty());
      CHECK(st.phi.size() == 10);

      const auto again = rationalize(kg, ui, p, o, seed);
      CHECK(again.mask_set == st.mask_set);
      CHECK(again.ui_drop_set == st.ui_drop_set);
      CHECK(again.gamma_noisy == st.gamma_noisy);

      RationaleOptions quiet = o;
      quiet.gumbel_noise = false;
      const auto det = rationalize(kg, ui, p, quiet, seed);
      CHECK(det.gamma_noisy == det.gamma);
      CHECK(det.mask_set == select_mask_set(det.gamma, o.k_m));
    }
  }

  TEST_CASE("shifting one head's logits leaves omega, gamma and sets unchanged") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {26});
      const auto kg = random_kg(15, 2, 40, false, rng);
      const auto s = score_all(kg, random_params(kg, 1, 5, 4, rng));
      std::vector<Index> heads;
      for (const auto& t : kg.triplets()) heads.push_back(t.head);
      const Index h = heads[uniform_index(rng, heads.size())];
      auto f = s.f;
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (heads[i] == h) f[i] += 25.0;
      }
      const auto omega = oracle::head_softmax(heads, f);
      std::vector<double> gamma(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) {
        gamma[i] = static_cast<double>(std::count(heads.begin(), heads.end(), heads[i])) * omega[i];
        CHECK(std::abs(omega[i] - s.omega[i]) < 1e-9);
        CHECK(std::abs(gamma[i] - s.gamma[i]) < 1e-9);
      }
      // Only compare sets when the cut is not within roundoff of a tie.
      const std::size_t k = 10;
      auto sorted = s.gamma;
      std::sort(sorted.rbegin(), sorted.rend());
      if (sorted[k - 1] - sorted[k] > 1e-8) CHECK(select_mask_set(gamma, k) == select_mask_set(s.gamma, k));
      std::sort(sorted.begin(), sorted.end());
      const std::size_t m = noise_set_size(f.size(), 0.2);
      if (m > 0 && sorted[m] - sorted[m - 1] > 1e-8) {
        CHECK(select_noise_set(gamma, 0.2) == select_noise_set(s.gamma, 0.2));
      }
    }
  }

  TEST_CASE("random selection mode draws uniform subsets of the right size") {
    Rng rng(4);
    const auto kg = random_kg(30, 3, 80, true, rng);
    const auto ui = random_interactions(8, 10, 0.5, rng);
    const ParamStore p = random_params(kg, 8, 10, 4, rng);
    RationaleOptions o;
    o.k_m = 20;
    o.rho_k = 0.3;
    o.rho_u = 5;
    o.mask_mode = SelectionMode::kRandom;
    o.aug_mode = SelectionMode::kRandom;
    const auto st = rationalize(kg, ui, p, o, 11);
    CHECK(st.mask_set.size() == 20);
    CHECK(st.kg_noise_set.size() == noise_set_size(kg.num_triplets(), 0.3));
    CHECK(st.ui_drop_set.size() == 5);
    o.k_m = kg.num_triplets() + 1;
    CHECK_THROWS_AS(rationalize(kg, ui, p, o, 11), ConfigError);
  }

  TEST_CASE("rationale dump has one row per triplet") {
    const auto kg = KnowledgeGraph::from_triplets(4, 1, {{0, 0, 1}, {2, 0, 3}}, true);
    Rng rng(1);
    std::ostringstream os;
    write_rationale_dump(os, kg, score_all(kg, random_params(kg, 1, 1, 3, rng)));
    const std::string out = os.str();
    CHECK(std::count(out.begin(), out.end(), '\n') == 5);
  }
}
