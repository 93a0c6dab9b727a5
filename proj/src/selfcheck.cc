#include "kgrec/selfcheck.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "kgrec/metrics.h"
#include "kgrec/model.h"
#include "kgrec/objectives.h"
#include "kgrec/oracles.h"
#include "kgrec/rationale.h"
#include "kgrec/trainer.h"

namespace kgrec {

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

Matrix random_matrix(std::size_t r, std::size_t c, double scale, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * (2.0 * uniform_open01(rng) - 1.0);
  return m;
}

class Checker {
 public:
  explicit Checker(std::string name) : t0_(std::chrono::steady_clock::now()) { r_.name = std::move(name); }

  void expect(bool ok, const std::string& what) {
    ++r_.checks;
    if (!ok) fail(what);
  }
  void close(double err, double tol, const std::string& what) {
    ++r_.checks;
    r_.worst_error = std::max(r_.worst_error, std::isnan(err) ? INFINITY : err);
    if (!(err <= tol)) {
      std::ostringstream os;
      os << what << ": error " << err << " > " << tol;
      fail(os.str());
    }
  }
  SuiteResult finish() {
    r_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    return r_;
  }

 private:
  void fail(const std::string& what) {
    r_.pass = false;
    if (r_.failures.size() < 20) r_.failures.push_back(what);
  }
  SuiteResult r_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace

KnowledgeGraph random_kg(std::size_t num_entities, std::size_t num_relations, std::size_t num_triplets,
                         bool add_inverse, Rng& rng) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < num_triplets; ++i) {
    t.push_back({static_cast<Index>(uniform_index(rng, num_entities)),
                 static_cast<Index>(uniform_index(rng, num_relations)),
                 static_cast<Index>(uniform_index(rng, num_entities))});
  }
  return KnowledgeGraph::from_triplets(num_entities, num_relations, std::move(t), add_inverse);
}

InteractionGraph random_interactions(std::size_t num_users, std::size_t num_items, double density, Rng& rng) {
  std::vector<std::pair<Index, Index>> e;
  for (Index u = 0; u < num_users; ++u) {
    for (Index v = 0; v < num_items; ++v) {
      if (uniform_open01(rng) < density) e.emplace_back(u, v);
    }
  }
  return InteractionGraph::from_edges(num_users, num_items, std::move(e));
}

GradcheckInstance make_gradcheck_instance(std::uint64_t seed) {
  GradcheckInstance g;
  Rng rng = make_rng(seed, {kStreamToy});
  g.cfg.dim = 8;
  g.cfg.layers = 2;
  g.cfg.k_m = 4;
  g.cfg.rho_k = 0.25;
  g.cfg.rho_u = 4;
  g.cfg.tau = 0.5;
  g.cfg.lambda1 = 0.5;
  g.cfg.lambda2 = 0.5;
  g.cfg.batch_size = 8;
  g.cfg.weight_decay = 0.0;
  g.cfg.seed = seed;
  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < 8; ++u) {
    const std::size_t n = 2 + uniform_index(rng, 3);
    for (std::size_t k = 0; k < n; ++k) edges.emplace_back(u, static_cast<Index>(uniform_index(rng, 6)));
  }
  g.train = InteractionGraph::from_edges(8, 6, std::move(edges));
  g.kg = random_kg(16, 3, 20, true, rng);
  g.params = init_params(g.cfg, g.train, g.kg);
  // Larger values than Xavier so the attention and projection terms are far from linear.
  for (auto& [name, m] : g.params.tensors()) {
    for (double& v : m->values()) v = 0.8 * (2.0 * uniform_open01(rng) - 1.0);
  }
  return g;
}

std::vector<LossGradcheck> gradcheck_losses(const GradcheckInstance& inst, double tol, bool inject_fault) {
  TrainContext ctx(inst.cfg, inst.train, inst.kg);
  const StepPlan plan = plan_step(ctx, inst.params, 0);
  struct Case {
    const char* name;
    LossWeights w;
  };
  const Case cases[] = {{"rec", {1, 0, 0}},
                        {"mae", {0, 1, 0}},
                        {"contrast", {0, 0, 1}},
                        {"joint", {1, inst.cfg.lambda1, inst.cfg.lambda2}}};
  std::vector<LossGradcheck> out;
  for (const auto& c : cases) {
    LossWithGrad fn = [&](const ParamStore& p, Gradients* g) {
      StepResult r = compute_step(ctx, p, plan, g != nullptr, c.w);
      if (g) {
        *g = std::move(r.grads);
        if (inject_fault) {
          for (double& v : (*g)[0].values()) v *= 1.05;
        }
      }
      return r.objective;
    };
    const GradCheckReport rep = grad_check(fn, inst.params, tol);
    LossGradcheck lg;
    lg.loss = c.name;
    lg.pass = rep.pass;
    for (const auto& t : rep.tensors) {
      if (t.max_rel_error >= lg.max_rel_error) {
        lg.max_rel_error = t.max_rel_error;
        lg.worst_tensor = t.name;
      }
    }
    out.push_back(lg);
  }
  return out;
}

SuiteResult run_gradcheck_suite(const SelfcheckOptions& opts) {
  Checker ck("gradcheck");
  const GradcheckInstance inst = make_gradcheck_instance(opts.seed);
  TrainContext ctx(inst.cfg, inst.train, inst.kg);
  const StepPlan plan = plan_step(ctx, inst.params, 0);
  ck.expect(!plan.rationale.mask_set.empty() && !plan.contrast_items.empty() && !plan.batch.empty(),
            "gradcheck instance exercises every loss term");
  for (const auto& lg : gradcheck_losses(inst, 1e-4, opts.inject_gradient_fault)) {
    ck.close(lg.max_rel_error, 1e-4, "loss " + lg.loss + " (worst tensor " + lg.worst_tensor + ")");
  }
  return ck.finish();
}

SuiteResult run_dense_suite(const SelfcheckOptions& opts) {
  Checker ck("dense");
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    Rng rng = make_rng(opts.seed, {0xd5, trial});
    const std::size_t ne = 2 + uniform_index(rng, 49);
    const std::size_t nr = 1 + uniform_index(rng, 4);
    const std::size_t nt = uniform_index(rng, 3 * ne + 1);
    const std::size_t ni = 1 + uniform_index(rng, ne);
    const std::size_t nu = 1 + uniform_index(rng, 50 - std::min<std::size_t>(49, ni));
    const std::size_t d = 1 + uniform_index(rng, 6);
    const int layers = static_cast<int>(uniform_index(rng, 4));
    const bool l0 = uniform_index(rng, 2) == 0;
    const KnowledgeGraph kg = random_kg(ne, nr, nt, uniform_index(rng, 2) == 0, rng);
    const InteractionGraph ui = random_interactions(nu, ni, 0.05 + 0.4 * uniform_open01(rng), rng);
    const std::string tag = " (trial " + std::to_string(trial) + ")";

    std::vector<TripletId> drop;
    for (TripletId id = 0; id < kg.num_triplets(); ++id) {
      if (uniform_open01(rng) < 0.3) drop.push_back(id);
    }
    const KgView view = make_kg_view(kg, ViewKind::kMaskedKg, drop);
    Matrix w(view.triplets.size(), 1);
    for (double& x : w.values()) x = uniform_open01(rng);
    const Matrix e0 = random_matrix(ne, d, 1.0, rng);
    const Matrix rel = random_matrix(kg.num_relations(), d, 1.0, rng);
    const Matrix u0 = random_matrix(nu, d, 1.0, rng);

    Tape tape;
    Var ev = tape.constant(e0), rv = tape.constant(rel), wv = tape.constant(w), uv = tape.constant(u0);
    const auto stack = kg_aggregate(tape, ev, rv, view, wv, layers);
    std::vector<Triplet> kept;
    std::vector<double> weights;
    for (std::size_t i = 0; i < view.triplets.size(); ++i) {
      kept.push_back(kg.triplet(view.triplets[i]));
      weights.push_back(w[i]);
    }
    const auto dense = oracle::dense_kg_layers(e0, rel, kept, weights, layers);
    std::vector<Matrix> plain;
    for (std::size_t l = 0; l < stack.size(); ++l) {
      plain.push_back(tape.value(stack[l]));
      ck.close(max_abs_diff(plain.back(), dense[l]), 1e-8, "kg_aggregate layer " + std::to_string(l) + tag);
    }

    std::vector<EdgeId> edge_drop;
    for (EdgeId e = 0; e < ui.num_edges(); ++e) {
      if (uniform_open01(rng) < 0.3) edge_drop.push_back(e);
    }
    const UiView full = make_ui_view(ui, ViewKind::kFullUi);
    const auto ustack = user_aggregate(tape, uv, full, stack, layers);
    const auto udense = oracle::dense_user_layers(u0, ui.edges(), ni, plain, layers);
    for (std::size_t l = 0; l < ustack.size(); ++l) {
      ck.close(max_abs_diff(tape.value(ustack[l]), udense[l]), 1e-8, "user_aggregate layer " + std::to_string(l) + tag);
    }

    const UiView aug = make_ui_view(ui, ViewKind::kAugmentedUi, edge_drop);
    std::vector<std::pair<Index, Index>> kept_edges;
    for (EdgeId e = 0; e < ui.num_edges(); ++e) {
      if (!std::binary_search(edge_drop.begin(), edge_drop.end(), e)) kept_edges.push_back(ui.edges()[e]);
    }
    const Matrix i0 = random_matrix(ni, d, 1.0, rng);
    const auto lg = lightgcn_encode(tape, uv, tape.constant(i0), aug, layers, l0);
    const auto [du, di] = oracle::dense_lightgcn(u0, i0, kept_edges, layers, l0);
    ck.close(max_abs_diff(tape.value(lg.users), du), 1e-8, "lightgcn users" + tag);
    ck.close(max_abs_diff(tape.value(lg.items), di), 1e-8, "lightgcn items" + tag);
  }
  return ck.finish();
}

SuiteResult run_metrics_suite(const SelfcheckOptions& opts) {
  Checker ck("metrics");
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    Rng rng = make_rng(opts.seed, {0x3e, trial});
    const std::size_t nu = 1 + uniform_index(rng, 50), ni = 1 + uniform_index(rng, 50);
    const std::size_t n = 1 + uniform_index(rng, 25);
    const InteractionGraph train = random_interactions(nu, ni, 0.3 * uniform_open01(rng), rng);
    std::vector<std::pair<Index, Index>> te;
    for (Index u = 0; u < nu; ++u) {
      for (Index v = 0; v < ni; ++v) {
        if (!train.has_edge(u, v) && uniform_open01(rng) < 0.15) te.emplace_back(u, v);
      }
    }
    const InteractionGraph test = InteractionGraph::from_edges(nu, ni, te);
    // Coarse scores force ties, which must break toward the smaller item id.
    const bool coarse = trial % 2 == 0;
    Matrix scores(nu, ni);
    for (double& s : scores.values()) {
      s = uniform_open01(rng);
      if (coarse) s = std::floor(s * 5.0) / 5.0;
    }
    const RankingMetrics m = full_rank_eval(scores, train, test, n, 1 + trial % 4);
    double rs = 0.0, ns = 0.0;
    std::size_t users = 0;
    for (const auto& pu : m.per_user) {
      const auto su = scores.row(pu.user);
      const auto tr = train.items_of(pu.user);
      const auto ts = test.items_of(pu.user);
      const auto o = oracle::rank_user(std::vector<double>(su.begin(), su.end()), std::set<Index>(tr.begin(), tr.end()),
                                       std::set<Index>(ts.begin(), ts.end()), n);
      ck.close(std::abs(o.recall - pu.recall), 1e-12, "recall user " + std::to_string(pu.user));
      ck.close(std::abs(o.ndcg - pu.ndcg), 1e-12, "ndcg user " + std::to_string(pu.user));
      rs += o.recall;
      ns += o.ndcg;
      ++users;
    }
    if (users) {
      ck.close(std::abs(rs / users - m.recall), 1e-12, "mean recall trial " + std::to_string(trial));
      ck.close(std::abs(ns / users - m.ndcg), 1e-12, "mean ndcg trial " + std::to_string(trial));
    }
    ck.expect(m.recall >= 0 && m.recall <= 1 && m.ndcg >= 0 && m.ndcg <= 1, "metrics within [0, 1]");
  }
  {
    // One relevant item ranked second.
    const InteractionGraph none = InteractionGraph::from_edges(1, 30, {});
    const InteractionGraph test = InteractionGraph::from_edges(1, 30, {{0, 7}});
    Matrix s(1, 30, 0.0);
    s(0, 3) = 2.0;
    s(0, 7) = 1.0;
    const RankingMetrics m = full_rank_eval(s, none, test, 20);
    ck.close(std::abs(m.ndcg - 1.0 / std::log2(3.0)), 1e-12, "ndcg single hit at rank 2");
    ck.close(std::abs(m.ndcg - 0.630930), 1e-6, "ndcg single hit at rank 2 (6 d.p.)");
  }
  return ck.finish();
}

SuiteResult run_rationale_suite(const SelfcheckOptions& opts) {
  Checker ck("rationale");
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    Rng rng = make_rng(opts.seed, {0x7a, trial});
    const std::size_t ne = 2 + uniform_index(rng, 40), nr = 1 + uniform_index(rng, 4);
    const KnowledgeGraph kg = random_kg(ne, nr, 1 + uniform_index(rng, 4 * ne), uniform_index(rng, 2) == 0, rng);
    const std::size_t T = kg.num_triplets();
    TrainConfig cfg;
    cfg.dim = 1 + uniform_index(rng, 8);
    cfg.seed = trial;
    const InteractionGraph ui = InteractionGraph::from_edges(1, 1, {{0, 0}});
    ParamStore p = init_params(cfg, ui, kg);
    for (auto* m : {&p.entity_embed, &p.relation_embed, &p.attn_q, &p.attn_k}) {
      for (double& v : m->values()) v = 2.0 * (2.0 * uniform_open01(rng) - 1.0);
    }
    const std::string tag = " (trial " + std::to_string(trial) + ")";
    const RationaleScores sc = score_all(kg, p);

    std::vector<Index> heads(T);
    std::vector<double> f_oracle(T);
    for (TripletId id = 0; id < T; ++id) {
      heads[id] = kg.triplet(id).head;
      f_oracle[id] = oracle::attention_logit(p.entity_embed, p.relation_embed, p.attn_q, p.attn_k, kg.triplet(id));
      ck.close(std::abs(f_oracle[id] - sc.f[id]), 1e-10, "attention logit" + tag);
    }
    const auto omega_oracle = oracle::head_softmax(heads, sc.f);
    std::vector<double> head_sum(ne, 0.0);
    for (TripletId id = 0; id < T; ++id) {
      ck.close(std::abs(omega_oracle[id] - sc.omega[id]), 1e-10, "omega vs naive softmax" + tag);
      ck.close(std::abs(sc.gamma[id] - kg.degree(heads[id]) * sc.omega[id]), 1e-12, "gamma = |N_h| omega" + tag);
      head_sum[heads[id]] += sc.omega[id];
    }
    for (Index h = 0; h < ne; ++h) {
      if (kg.degree(h) > 0) ck.close(std::abs(head_sum[h] - 1.0), 1e-6, "per-head omega sum" + tag);
    }

    ParamStore flat = p;
    flat.attn_q.fill(0.0);
    for (double g : score_all(kg, flat).gamma) ck.close(std::abs(g - 1.0), 1e-12, "uniform f gives gamma 1" + tag);

    const std::size_t k_m = uniform_index(rng, T + 1);
    const double rho_k = std::floor(uniform_open01(rng) * 10.0) / 10.0;
    // Coarse scores exercise the index tie-break.
    std::vector<double> coarse(sc.gamma);
    if (trial % 2 == 0) {
      for (double& g : coarse) g = std::round(g * 2.0) / 2.0;
    }
    const auto mask = select_mask_set(coarse, k_m);
    const auto oracle_mask = oracle::sort_top_k(coarse, k_m, true);
    ck.expect(mask == std::vector<TripletId>(oracle_mask.begin(), oracle_mask.end()), "mask set vs sort oracle" + tag);
    ck.expect(mask.size() == k_m, "|mask set| = k_m" + tag);
    const auto noise = select_noise_set(coarse, rho_k);
    const std::size_t ns = static_cast<std::size_t>(std::floor(rho_k * static_cast<double>(T) + 1e-9));
    const auto oracle_noise = oracle::sort_top_k(coarse, ns, false);
    ck.expect(noise == std::vector<TripletId>(oracle_noise.begin(), oracle_noise.end()), "noise set vs sort oracle" + tag);
    ck.expect(noise.size() == ns, "|noise set| = floor(rho_k T)" + tag);

    // A per-head constant added to f leaves omega, gamma and the mask set unchanged.
    std::vector<double> shift(ne);
    for (double& c : shift) c = std::round(10.0 * (2.0 * uniform_open01(rng) - 1.0));
    std::vector<double> f_csr, g_csr;
    std::vector<TripletId> ids;
    for (const auto& n : kg.head_entries()) ids.push_back(n.id);
    for (TripletId id : ids) {
      f_csr.push_back(sc.f[id]);
      g_csr.push_back(sc.f[id] + shift[kg.triplet(id).head]);
    }
    const auto w0 = segment_softmax(f_csr, kg.head_offsets());
    const auto w1 = segment_softmax(g_csr, kg.head_offsets());
    std::vector<double> gamma0(T), gamma1(T);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ck.close(std::abs(w0[i] - w1[i]), 1e-12, "shift invariance of omega" + tag);
      const double deg = static_cast<double>(kg.degree(kg.triplet(ids[i]).head));
      gamma0[ids[i]] = deg * w0[i];
      gamma1[ids[i]] = deg * w1[i];
      ck.close(std::abs(gamma0[ids[i]] - gamma1[ids[i]]), 1e-12, "shift invariance of gamma" + tag);
    }
    const std::size_t k_shift = std::min<std::size_t>(k_m, T);
    const auto m0 = select_mask_set(gamma0, k_shift), m1 = select_mask_set(gamma1, k_shift);
    // Scores equal up to rounding can legitimately swap order; compare only when the
    // cut is separated by more than rounding noise.
    std::vector<double> sorted(gamma0);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const bool separated = k_shift == 0 || k_shift == T || sorted[k_shift - 1] - sorted[k_shift] > 1e-9;
    if (separated) ck.expect(m0 == m1, "shift invariance of mask set" + tag);
  }
  return ck.finish();
}

SuiteResult run_losses_suite(const SelfcheckOptions& opts) {
  Checker ck("losses");
  ck.close(std::abs(neg_log_sigmoid(0.0) - std::log(2.0)), 1e-15, "-log sigmoid(0) = ln 2");
  ck.close(std::abs(neg_log_sigmoid(0.0) - 0.693147), 1e-6, "-log sigmoid(0) (6 d.p.)");
  {
    Matrix z(4, 3, 0.5);
    const std::vector<Index> items{0, 1, 2, 3};
    const std::vector<std::array<Index, 2>> negs{{1, 2}, {0, 3}, {3, 0}, {2, 1}};
    for (double tau : {0.1, 0.2, 1.0}) {
      const auto t = contrastive_terms(z, z, items, negs, {tau, false, Reduction::kSum});
      for (double l : t.loss) {
        ck.close(std::abs(l - std::log(3.0)), 1e-12, "equal-similarity contrastive loss = ln 3");
        ck.close(std::abs(l - 1.098612), 1e-6, "equal-similarity contrastive loss (6 d.p.)");
      }
    }
  }
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    Rng rng = make_rng(opts.seed, {0x10, trial});
    const std::size_t n = 3 + uniform_index(rng, 20), d = 1 + uniform_index(rng, 6);
    const Matrix zu = random_matrix(n, d, 1.0, rng), zk = random_matrix(n, d, 1.0, rng);
    std::vector<Index> items(n);
    for (Index v = 0; v < n; ++v) items[v] = v;
    const auto negs = sample_contrastive_negatives(items, rng);
    const double tau = 0.1 + 0.9 * uniform_open01(rng);
    const bool literal = trial % 2 == 1;
    const auto t = contrastive_terms(zu, zk, items, negs, {tau, literal, Reduction::kSum});
    for (std::size_t i = 0; i < n; ++i) {
      const double b = contrastive_lower_bound(t.neg[i], tau, literal);
      ck.expect(t.loss[i] >= b - 1e-12, "contrastive loss above its lower bound");
    }
  }
  return ck.finish();
}

std::vector<std::string> suite_names() { return {"gradcheck", "dense", "metrics", "rationale", "losses"}; }

SuiteResult run_suite(const std::string& name, const SelfcheckOptions& opts) {
  if (name == "gradcheck") return run_gradcheck_suite(opts);
  if (name == "dense") return run_dense_suite(opts);
  if (name == "metrics") return run_metrics_suite(opts);
  if (name == "rationale") return run_rationale_suite(opts);
  if (name == "losses") return run_losses_suite(opts);
  throw ConfigError("unknown suite '" + name + "'");
}

}  // namespace kgrec
