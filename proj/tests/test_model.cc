#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgrec/model.h"
#include "kgrec/oracles.h"
#include "kgrec/selfcheck.h"
#include "support.h"

using namespace kgrec;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.values()) x = 2.0 * uniform_open01(rng) - 1.0;
  return m;
}

std::vector<double> values_of(const Tape& t, Var v) {
  const auto s = t.value(v).values();
  return {s.begin(), s.end()};
}

std::vector<Triplet> view_triplets(const KgView& v) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < v.triplets.size(); ++i) out.push_back({v.heads[i], v.relations[i], v.tails[i]});
  return out;
}

// Encodes a KG view with attention weights and returns the layer values.
std::vector<Matrix> encode_kg(const ParamStore& p, const KnowledgeGraph& kg, const KgView& view, int layers,
                              std::vector<double>* weights = nullptr) {
  Tape t;
  const ParamVars v = bind_params(t, p, false);
  Var omega = view_weights(t, attention_logits(t, v, kg), view);
  if (weights) *weights = values_of(t, omega);
  std::vector<Matrix> out;
  for (Var l : kg_aggregate(t, v.entity, v.relation, view, omega, layers)) out.push_back(t.value(l));
  return out;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("single-neighbour aggregation") {
    const auto kg = KnowledgeGraph::from_triplets(2, 1, {{0, 0, 1}}, false);
    Tape t;
    Var e0 = t.constant(Matrix(2, 2, {0.0, 0.0, 1.0, -1.0}));
    Var rel = t.constant(Matrix(1, 2, {2.0, 3.0}));
    const KgView view = make_kg_view(kg, ViewKind::kFullKg);
    Var omega = t.constant(Matrix(1, 1, 1.0));
    const auto stack = kg_aggregate(t, e0, rel, view, omega, 2);
    REQUIRE(stack.size() == 3);
    CHECK(t.value(stack[1]) == Matrix(2, 2, {2.0, -3.0, 0.0, 0.0}));
    // Entity 1 has no neighbours: zero at every layer >= 1.
    CHECK(t.value(stack[2])(1, 0) == 0.0);
    CHECK(t.value(stack[2])(1, 1) == 0.0);
  }

  TEST_CASE("kg aggregation matches dense operator oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {30});
      const auto kg = random_kg(30, 3, 70, seed % 2 == 0, rng);
      const ParamStore p = ParamStore::init({5, 30, kg.num_relations(), 1, 10, false}, rng);
      std::vector<TripletId> ex;
      for (TripletId i = 0; i < kg.num_triplets(); ++i) {
        if (uniform_index(rng, 4) == 0) ex.push_back(i);
      }
      const KgView view = make_kg_view(kg, ViewKind::kMaskedKg, ex);
      std::vector<double> w;
      const auto got = encode_kg(p, kg, view, 2, &w);
      const auto want = oracle::dense_kg_layers(p.entity_embed, p.relation_embed, view_triplets(view), w, 2);
      for (int l = 0; l <= 2; ++l) CHECK(testing::max_abs_diff(got[l], want[l]) < 1e-8);
      // Weights re-normalise over each head's surviving triplets.
      for (Index h = 0; h < view.num_entities(); ++h) {
        if (view.degree(h) == 0) continue;
        double s = 0.0;
        for (std::size_t i = view.offsets[h]; i < view.offsets[h + 1]; ++i) s += w[i];
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
    }
  }

  TEST_CASE("excluding triplets equals rebuilding the graph without them") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {31});
      const auto kg = random_kg(25, 3, 60, false, rng);
      const ParamStore p = ParamStore::init({4, 25, 3, 1, 8, false}, rng);
      std::vector<TripletId> ex;
      std::vector<Triplet> kept;
      for (TripletId i = 0; i < kg.num_triplets(); ++i) {
        if (uniform_index(rng, 3) == 0) {
          ex.push_back(i);
        } else {
          kept.push_back(kg.triplet(i));
        }
      }
      const auto rebuilt = KnowledgeGraph::from_triplets(25, 3, kept, false);
      const auto a = encode_kg(p, kg, make_kg_view(kg, ViewKind::kMaskedKg, ex), 2);
      const auto b = encode_kg(p, rebuilt, make_kg_view(rebuilt, ViewKind::kFullKg), 2);
      for (int l = 0; l <= 2; ++l) CHECK(testing::max_abs_diff(a[l], b[l]) < 1e-10);
    }
  }

  TEST_CASE("relabelling entities permutes the outputs") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {32});
      const std::size_t n = 20;
      const auto kg = random_kg(n, 2, 45, true, rng);
      const ParamStore p = ParamStore::init({4, n, kg.num_relations(), 1, 5, false}, rng);
      std::vector<Index> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<Triplet> relabelled;
      for (const auto& t : kg.base_triplets()) relabelled.push_back({perm[t.head], t.relation, perm[t.tail]});
      const auto kg2 = KnowledgeGraph::from_triplets(n, kg.num_base_relations(), relabelled, true);
      ParamStore p2 = p;
      for (Index h = 0; h < n; ++h) {
        for (std::size_t c = 0; c < 4; ++c) p2.entity_embed(perm[h], c) = p.entity_embed(h, c);
      }
      const auto a = encode_kg(p, kg, make_kg_view(kg, ViewKind::kFullKg), 2);
      const auto b = encode_kg(p2, kg2, make_kg_view(kg2, ViewKind::kFullKg), 2);
      for (int l = 0; l <= 2; ++l) {
        for (Index h = 0; h < n; ++h) {
          for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(a[l](h, c) - b[l](perm[h], c)) < 1e-10);
        }
      }
    }
  }

  TEST_CASE("user aggregation examples") {
    const auto ui = InteractionGraph::from_edges(3, 2, {{0, 0}, {1, 0}, {1, 1}});
    Tape t;
    Var u0 = t.constant(Matrix(3, 2, 9.0));
    const std::vector<Var> ent{t.constant(Matrix(2, 2, {1.5, -2.0, -1.5, 2.0}))};
    const auto stack = user_aggregate(t, u0, make_ui_view(ui, ViewKind::kFullUi), ent, 1);
    const Matrix& u1 = t.value(stack[1]);
    CHECK(u1(0, 0) == 1.5);
    CHECK(u1(0, 1) == -2.0);
    CHECK(u1(1, 0) == 0.0);
    CHECK(u1(1, 1) == 0.0);
    // User 2 has no interactions.
    CHECK(u1(2, 0) == 0.0);
  }

  TEST_CASE("user aggregation matches row-normalised adjacency oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {33});
      const auto ui = random_interactions(10, 10, 0.3, rng);
      std::vector<Matrix> ent{random_matrix(14, 3, rng), random_matrix(14, 3, rng)};
      const Matrix u0 = random_matrix(10, 3, rng);
      Tape t;
      std::vector<Var> ev;
      for (const auto& m : ent) ev.push_back(t.constant(m));
      const auto stack = user_aggregate(t, t.constant(u0), make_ui_view(ui, ViewKind::kFullUi), ev, 2);
      const auto want = oracle::dense_user_layers(u0, ui.edges(), 10, ent, 2);
      for (int l = 0; l <= 2; ++l) CHECK(testing::max_abs_diff(t.value(stack[l]), want[l]) < 1e-12);
    }
  }

  TEST_CASE("final encoding sums the layer stack") {
    Rng rng(3);
    Tape t;
    const Matrix a = random_matrix(4, 3, rng), b = random_matrix(4, 3, rng), c = random_matrix(4, 3, rng);
    CHECK(t.value(encode_final(t, {t.constant(a)})) == a);
    CHECK(t.value(encode_final(t, {t.constant(a), t.constant(Matrix(4, 3)), t.constant(Matrix(4, 3))})) == a);
    const Matrix& sum = t.value(encode_final(t, {t.constant(a), t.constant(b), t.constant(c)}));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(sum[i] == doctest::Approx(a[i] + b[i] + c[i]).epsilon(1e-15));
    const Matrix& no0 = t.value(encode_final(t, {t.constant(a), t.constant(b)}, false));
    CHECK(no0 == b);
  }

  TEST_CASE("lightgcn single edge and biregular graph") {
    {
      const auto ui = InteractionGraph::from_edges(1, 1, {{0, 0}});
      Tape t;
      const auto out = lightgcn_encode(t, t.constant(Matrix(1, 2, {3.0, 4.0})), t.constant(Matrix(1, 2, {-1.0, 2.0})),
                                       make_ui_view(ui, ViewKind::kFullUi), 1);
      CHECK(t.value(out.user_layers[1]) == Matrix(1, 2, {-1.0, 2.0}));
      CHECK(t.value(out.item_layers[1]) == Matrix(1, 2, {3.0, 4.0}));
    }
    // 4 users x 4 items, every node of degree 2.
    const auto ui = InteractionGraph::from_edges(4, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 2}, {2, 3}, {3, 3}, {3, 0}});
    Tape t;
    const auto out = lightgcn_encode(t, t.constant(Matrix(4, 3, 1.0)), t.constant(Matrix(4, 3, 1.0)),
                                     make_ui_view(ui, ViewKind::kFullUi), 2);
    for (int l = 1; l <= 2; ++l) {
      for (double x : t.value(out.user_layers[l]).values()) CHECK(x == doctest::Approx(1.0).epsilon(1e-14));
      for (double x : t.value(out.item_layers[l]).values()) CHECK(x == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("lightgcn matches normalised-adjacency power oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {34});
      const auto ui = random_interactions(6, 6, 0.35, rng);
      const Matrix u0 = random_matrix(6, 3, rng), i0 = random_matrix(6, 3, rng);
      const bool with0 = seed % 3 != 0;
      Tape t;
      const auto out = lightgcn_encode(t, t.constant(u0), t.constant(i0), make_ui_view(ui, ViewKind::kAugmentedUi), 2,
                                       with0);
      const auto [wu, wi] = oracle::dense_lightgcn(u0, i0, ui.edges(), 2, with0);
      CHECK(testing::max_abs_diff(t.value(out.users), wu) < 1e-8);
      CHECK(testing::max_abs_diff(t.value(out.items), wi) < 1e-8);
    }
  }

  TEST_CASE("projection head examples") {
    Rng rng(6);
    ParamStore p = ParamStore::init({3, 4, 1, 2, 2, false}, rng);
    Tape t;
    const ParamVars v = bind_params(t, p, false);
    const Matrix& z = t.value(project_contrastive(t, v.mlp_u, t.constant(Matrix(2, 3))));
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        double want = 0.0;
        for (std::size_t k = 0; k < 3; ++k) want += 0.5 * p.mlp_u.w2(k, c);
        CHECK(z(r, c) == doctest::Approx(want).epsilon(1e-14));
      }
    }
    p.mlp_k.w2.fill(0.0);
    p.mlp_k.b2 = Matrix(1, 3, {0.25, -1.0, 2.0});
    Tape t2;
    const ParamVars v2 = bind_params(t2, p, false);
    const Matrix& zc = t2.value(project_contrastive(t2, v2.mlp_k, t2.constant(random_matrix(5, 3, rng))));
    for (std::size_t r = 0; r < 5; ++r) CHECK(zc(r, 2) == 2.0);
  }

  TEST_CASE("projection head gradient passes finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng = make_rng(seed, {35});
      const ParamStore p = ParamStore::init({4, 5, 1, 2, 3, false}, rng);
      const Matrix x = random_matrix(3, 4, rng);
      auto fn = [&](const ParamStore& s, Gradients* g) {
        Tape t;
        const ParamVars v = bind_params(t, s, g != nullptr);
        Var z = project_contrastive(t, v.mlp_u, t.constant(x));
        Var z2 = project_contrastive(t, v.mlp_k, t.constant(x));
        Var loss = ops::add(t, ops::sum(t, ops::mul(t, z, z)), ops::sum(t, ops::mul(t, z2, z2)));
        if (g) {
          t.backward(loss);
          *g = collect_gradients(t, v, s);
        }
        return t.item(loss);
      };
      CHECK(grad_check(fn, p, 1e-4).pass);
    }
  }

  TEST_CASE("predict is the dot product") {
    const Matrix u(1, 2, {1.0, 0.0}), e(2, 2, {1.0, 0.0, 0.0, 1.0});
    CHECK(predict(u, e, 0, 0) == 1.0);
    CHECK(predict(u, e, 0, 1) == 0.0);
    CHECK_THROWS_AS(predict(u, e, 1, 0), ContractViolation);
    CHECK_THROWS_AS(predict(u, e, 0, 2), ContractViolation);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      const Matrix a = random_matrix(3, 7, rng), b = random_matrix(5, 7, rng);
      double s = 0.0;
      for (std::size_t i = 0; i < 7; ++i) s += a(2, i) * b(4, i);
      CHECK(std::abs(predict(a, b, 2, 4) - s) < 1e-14);
    }
  }

  TEST_CASE("evaluation encoding is finite and shaped") {
    Rng rng(2);
    const auto kg = random_kg(20, 2, 40, true, rng);
    const auto ui = random_interactions(6, 8, 0.4, rng);
    const ParamStore p = ParamStore::init({4, 20, kg.num_relations(), 6, 8, false}, rng);
    const auto enc = encode_for_eval(p, kg, ui, {});
    CHECK(enc.user_out.rows() == 6);
    CHECK(enc.entity_out.rows() == 20);
    CHECK(enc.z_u.rows() == 8);
    CHECK(enc.z_k.rows() == 8);
    CHECK(enc.user_out.all_finite());
    CHECK(enc.entity_out.all_finite());
  }
}
