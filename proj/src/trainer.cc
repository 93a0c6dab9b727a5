#include "kgrec/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "kgrec/checkpoint.h"

namespace kgrec {

namespace {

std::string describe(const LossBundle& b) {
  std::ostringstream os;
  os.precision(10);
  os << "l_rec=" << b.l_rec << " l_m=" << b.l_m << " l_c=" << b.l_c << " l2=" << b.l2 << " total=" << b.total
     << " (lambda1=" << b.lambda1 << " lambda2=" << b.lambda2 << " tau=" << b.tau << ")";
  return os.str();
}

double l2_value(const ParamStore& params, double weight_decay) {
  double s = 0.0;
  for (const auto& [name, m] : params.tensors()) {
    for (double v : m->values()) s += v * v;
  }
  return 0.5 * weight_decay * s;
}

Matrix stack_rows(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace

TrainingDiverged::TrainingDiverged(const LossBundle& losses, std::uint64_t step)
    : std::runtime_error("non-finite loss at step " + std::to_string(step) + ": " + describe(losses)),
      losses_(losses) {}

std::vector<BprTriple> sample_bpr_batch(const InteractionGraph& train, std::size_t batch_size, Rng& rng,
                                        BprSampleStats* stats) {
  BprSampleStats local;
  std::vector<Index> eligible;
  const std::size_t ni = train.num_items();
  for (Index u = 0; u < train.num_users(); ++u) {
    const std::size_t deg = train.user_degree(u);
    if (deg == 0) continue;
    if (deg >= ni) {
      ++local.saturated_users;
      continue;
    }
    eligible.push_back(u);
  }
  std::vector<BprTriple> batch;
  if (batch_size > 0 && !eligible.empty()) {
    batch.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const Index u = eligible[uniform_index(rng, eligible.size())];
      const auto items = train.items_of(u);
      const Index v = items[uniform_index(rng, items.size())];
      std::optional<Index> j;
      for (int attempt = 0; attempt < 100 && !j; ++attempt) {
        const auto c = static_cast<Index>(uniform_index(rng, ni));
        if (!std::binary_search(items.begin(), items.end(), c)) j = c;
      }
      if (!j) {
        ++local.fallback_scans;
        std::vector<Index> complement;
        for (Index c = 0; c < ni; ++c) {
          if (!std::binary_search(items.begin(), items.end(), c)) complement.push_back(c);
        }
        j = complement[uniform_index(rng, complement.size())];
      }
      batch.push_back({u, v, *j});
    }
  }
  if (stats) {
    stats->saturated_users += local.saturated_users;
    stats->fallback_scans += local.fallback_scans;
  }
  return batch;
}

TrainContext::TrainContext(const TrainConfig& c, const InteractionGraph& t, const KnowledgeGraph& k)
    : cfg(c),
      train(t),
      kg(k),
      full_ui(make_ui_view(t, ViewKind::kFullUi)),
      full_kg(make_kg_view(k, ViewKind::kFullKg)),
      rho_u(resolve_rho_u(c, t.num_edges())) {}

StepPlan plan_step(const TrainContext& ctx, const ParamStore& params, std::uint64_t step) {
  const TrainConfig& cfg = ctx.cfg;
  const std::uint64_t seed = derive_seed(cfg.seed, {kStreamStep, step});
  StepPlan plan;
  plan.step = step;

  RationaleOptions ro;
  ro.k_m = cfg.k_m;
  ro.rho_k = cfg.rho_k;
  ro.rho_u = ctx.rho_u;
  ro.gumbel_noise = !cfg.deterministic_noise;
  ro.literal_phi_softmax = cfg.literal_phi_softmax;
  ro.mask_mode = cfg.mask_mode;
  ro.aug_mode = cfg.aug_mode;
  plan.rationale = rationalize(ctx.kg, ctx.train, params, ro, seed);
  plan.masked_kg = make_kg_view(ctx.kg, ViewKind::kMaskedKg, plan.rationale.mask_set);
  plan.augmented_kg = make_kg_view(ctx.kg, ViewKind::kAugmentedKg, plan.rationale.kg_noise_set);
  plan.augmented_ui = make_ui_view(ctx.train, ViewKind::kAugmentedUi, plan.rationale.ui_drop_set);

  Rng batch_rng = make_rng(seed, {kStreamBatch});
  plan.batch = sample_bpr_batch(ctx.train, cfg.batch_size, batch_rng);

  if (cfg.lambda2 > 0.0) {
    for (const auto& t : plan.batch) plan.contrast_items.push_back(t.pos);
    std::sort(plan.contrast_items.begin(), plan.contrast_items.end());
    plan.contrast_items.erase(std::unique(plan.contrast_items.begin(), plan.contrast_items.end()),
                              plan.contrast_items.end());
    if (plan.contrast_items.size() >= 3) {
      Rng crng = make_rng(seed, {kStreamContrast});
      plan.contrast_negatives = sample_contrastive_negatives(plan.contrast_items, crng);
    } else {
      plan.contrast_items.clear();
    }
  }
  return plan;
}

StepResult compute_step(const TrainContext& ctx, const ParamStore& params, const StepPlan& plan,
                        bool with_grads, std::optional<LossWeights> weights) {
  const TrainConfig& cfg = ctx.cfg;
  const LossWeights w = weights.value_or(LossWeights{1.0, cfg.lambda1, cfg.lambda2});
  const int L = cfg.layers;
  const bool l0 = cfg.include_layer0;
  Tape tape;
  ParamVars p = bind_params(tape, params, with_grads);
  Var logits = attention_logits(tape, p, ctx.kg);

  Var omega_m = view_weights(tape, logits, plan.masked_kg);
  auto stack_m = kg_aggregate(tape, p.entity, p.relation, plan.masked_kg, omega_m, L);
  Var e_m = encode_final(tape, stack_m, l0);

  auto rec_stack = stack_m;
  Var e_rec = e_m;
  if (!cfg.rec_on_masked) {
    Var omega_f = view_weights(tape, logits, ctx.full_kg);
    rec_stack = kg_aggregate(tape, p.entity, p.relation, ctx.full_kg, omega_f, L);
    e_rec = encode_final(tape, rec_stack, l0);
  }

  StepResult res;
  Var objective = tape.scalar(0.0);
  double l_rec = 0.0, l_m = 0.0, l_c = 0.0;

  if (w.rec != 0.0 && !plan.batch.empty()) {
    auto ustack = user_aggregate(tape, p.user, ctx.full_ui, rec_stack, L);
    Var u_out = encode_final(tape, ustack, l0);
    std::vector<Index> us, vs, js;
    for (const auto& t : plan.batch) {
      us.push_back(t.user);
      vs.push_back(t.pos);
      js.push_back(t.neg);
    }
    Var eu = ops::gather_rows(tape, u_out, us);
    Var pos = ops::row_dot(tape, eu, ops::gather_rows(tape, e_rec, vs));
    Var neg = ops::row_dot(tape, eu, ops::gather_rows(tape, e_rec, js));
    Var rec = bpr_loss(tape, pos, neg, cfg.loss_reduction);
    l_rec = tape.item(rec);
    objective = ops::add(tape, objective, w.rec == 1.0 ? rec : ops::scale(tape, rec, w.rec));
  }

  if (w.mae != 0.0 && !plan.rationale.mask_set.empty()) {
    Var lm = reconstruction_loss(tape, ctx.kg, plan.rationale.mask_set, e_m, p.relation, cfg.loss_reduction);
    l_m = tape.item(lm);
    objective = ops::add(tape, objective, ops::scale(tape, lm, w.mae));
  }

  if (w.contrast != 0.0 && !plan.contrast_items.empty()) {
    const std::size_t ni = ctx.train.num_items();
    Var omega_c = view_weights(tape, logits, plan.augmented_kg);
    auto stack_c = kg_aggregate(tape, p.entity, p.relation, plan.augmented_kg, omega_c, L);
    Var x_k = ops::slice_rows(tape, encode_final(tape, stack_c, l0), 0, ni);
    Var user0 = p.cf_user.valid() ? p.cf_user : p.user;
    Var item0 = p.cf_item.valid() ? p.cf_item : ops::slice_rows(tape, p.entity, 0, ni);
    auto cf = lightgcn_encode(tape, user0, item0, plan.augmented_ui, L, l0);
    Var z_u = project_contrastive(tape, p.mlp_u, cf.items);
    Var z_k = project_contrastive(tape, p.mlp_k, x_k);
    ContrastiveOptions co{cfg.tau, cfg.literal_infonce_denominator, cfg.loss_reduction};
    Var lc = contrastive_loss(tape, z_u, z_k, plan.contrast_items, plan.contrast_negatives, co);
    l_c = tape.item(lc);
    objective = ops::add(tape, objective, ops::scale(tape, lc, w.contrast));
  }

  res.objective = tape.item(objective);
  res.losses = joint_loss(l_rec, l_m, l_c, l2_value(params, cfg.weight_decay), cfg.lambda1, cfg.lambda2, cfg.tau);
  if (with_grads && std::isfinite(res.objective)) {
    if (tape.requires_grad(objective)) tape.backward(objective);
    res.grads = collect_gradients(tape, p, params);
  }
  return res;
}

ParamStore init_params(const TrainConfig& cfg, const InteractionGraph& train, const KnowledgeGraph& kg) {
  ParamShape shape;
  shape.dim = cfg.dim;
  shape.num_entities = kg.num_entities();
  shape.num_relations = kg.num_relations();
  shape.num_users = train.num_users();
  shape.num_items = train.num_items();
  shape.separate_cf_tables = cfg.separate_cf_tables;
  Rng rng = make_rng(cfg.seed, {kStreamInit});
  return ParamStore::init(shape, rng);
}

LossBundle train_step(ParamStore& params, const TrainContext& ctx) {
  const StepPlan plan = plan_step(ctx, params, params.step);
  if (plan.batch.empty()) {
    ++params.step;
    return joint_loss(0, 0, 0, l2_value(params, ctx.cfg.weight_decay), ctx.cfg.lambda1, ctx.cfg.lambda2,
                      ctx.cfg.tau);
  }
  StepResult r = compute_step(ctx, params, plan, true);
  if (!std::isfinite(r.losses.total) || !std::isfinite(r.objective)) throw TrainingDiverged(r.losses, params.step);
  AdamConfig ac{ctx.cfg.lr, ctx.cfg.adam_beta1, ctx.cfg.adam_beta2, ctx.cfg.adam_eps, ctx.cfg.weight_decay};
  adam_step(params, r.grads, ac);
  return r.losses;
}

std::string to_json_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["l_rec"] = r.l_rec;
  j["l_m"] = r.l_m;
  j["l_c"] = r.l_c;
  j["recall@20"] = r.recall;
  j["ndcg@20"] = r.ndcg;
  j["alignment"] = r.alignment;
  j["uniformity"] = r.uniformity;
  j["lc_bound_checked"] = r.bound_checked;
  j["lc_bound_violations"] = r.bound_violations;
  j["lc_bound_min_gap"] = r.min_bound_gap;
  return j.dump();
}

EvalRecord evaluate_epoch(const TrainContext& ctx, const ParamStore& params, const InteractionGraph& valid,
                          std::size_t epoch) {
  const TrainConfig& cfg = ctx.cfg;
  EvalRecord rec;
  rec.epoch = epoch;
  rec.step = params.step;
  const EncodedModel em = encode_for_eval(params, ctx.kg, ctx.train, ctx.model_opts(), true);
  const RankingMetrics m = full_rank_eval(em.user_out, em.entity_out, ctx.train, valid, cfg.topn, cfg.workers);
  rec.recall = m.recall;
  rec.ndcg = m.ndcg;

  const Matrix zu = normalize_rows(em.z_u), zk = normalize_rows(em.z_k);
  const AUReport au = alignment_uniformity(zu, zk, stack_rows(zu, zk), 200000,
                                           derive_seed(cfg.seed, {kStreamEval, epoch}));
  rec.alignment = au.alignment;
  rec.uniformity = au.uniformity;

  const std::size_t ni = ctx.train.num_items();
  if (ni >= 3) {
    std::vector<Index> items(ni);
    for (Index v = 0; v < ni; ++v) items[v] = v;
    Rng rng = make_rng(cfg.seed, {kStreamEval, epoch, 1});
    const auto negs = sample_contrastive_negatives(items, rng);
    ContrastiveOptions co{cfg.tau, cfg.literal_infonce_denominator, Reduction::kSum};
    const ContrastiveTerms terms = contrastive_terms(em.z_u, em.z_k, items, negs, co);
    rec.min_bound_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < items.size(); ++i) {
      const double bound = contrastive_lower_bound(terms.neg[i], cfg.tau, cfg.literal_infonce_denominator);
      const double gap = terms.loss[i] - bound;
      rec.min_bound_gap = std::min(rec.min_bound_gap, gap);
      ++rec.bound_checked;
      if (gap < -1e-9) ++rec.bound_violations;
    }
  }
  return rec;
}

TrainState run_training(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opts) {
  for (const auto& w : validate_config(cfg, data.kg.num_triplets(), data.train.num_edges())) spdlog::warn("{}", w);
  TrainContext ctx(cfg, data.train, data.kg);
  TrainState st;
  st.root_seed = cfg.seed;
  if (opts.resume_from) {
    CheckpointHeader h;
    st.params = load_checkpoint(*opts.resume_from, &h);
    if (h.dim != cfg.dim || h.num_entities != data.kg.num_entities() ||
        h.num_relations != data.kg.num_relations() || h.num_users != data.train.num_users()) {
      throw ConfigError("checkpoint " + opts.resume_from->string() + " does not match the config/dataset shape");
    }
  } else {
    st.params = init_params(cfg, data.train, data.kg);
  }
  const std::size_t edges = data.train.num_edges();
  const std::size_t steps_per_epoch = cfg.batch_size == 0 ? 1 : (edges + cfg.batch_size - 1) / cfg.batch_size;
  st.epoch = steps_per_epoch ? static_cast<std::size_t>(st.params.step / steps_per_epoch) : 0;

  std::ofstream metrics;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    const auto path = *opts.out_dir / "metrics.jsonl";
    metrics.open(path, opts.resume_from ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + path.string());
  }
  auto save = [&](const char* name, const ParamStore& p) {
    if (opts.out_dir) save_checkpoint(*opts.out_dir / name, p);
  };
  auto record = [&](EvalRecord rec) {
    st.history.push_back(rec);
    if (metrics) metrics << to_json_line(rec) << '\n' << std::flush;
    if (opts.on_eval) opts.on_eval(rec);
    spdlog::info("epoch {} recall@{}={:.4f} ndcg@{}={:.4f} l_rec={:.4f} l_m={:.4f} l_c={:.4f}", rec.epoch, cfg.topn,
                 rec.recall, cfg.topn, rec.ndcg, rec.l_rec, rec.l_m, rec.l_c);
    if (rec.recall > st.best_recall) {
      st.best_recall = rec.recall;
      st.best_epoch = rec.epoch;
      st.best_params = st.params;
      st.evals_since_improvement = 0;
      save("best.ckpt", st.params);
    } else {
      ++st.evals_since_improvement;
    }
  };

  {
    EvalRecord rec = evaluate_epoch(ctx, st.params, data.valid, st.epoch);
    const StepResult probe = compute_step(ctx, st.params, plan_step(ctx, st.params, st.params.step), false);
    rec.l_rec = probe.losses.l_rec;
    rec.l_m = probe.losses.l_m;
    rec.l_c = probe.losses.l_c;
    record(rec);
  }

  while (st.epoch < cfg.epochs) {
    double s_rec = 0, s_m = 0, s_c = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const LossBundle b = train_step(st.params, ctx);
      s_rec += b.l_rec;
      s_m += b.l_m;
      s_c += b.l_c;
    }
    ++st.epoch;
    if (st.epoch % cfg.eval_every != 0 && st.epoch != cfg.epochs) continue;
    EvalRecord rec = evaluate_epoch(ctx, st.params, data.valid, st.epoch);
    const double k = static_cast<double>(steps_per_epoch);
    rec.l_rec = s_rec / k;
    rec.l_m = s_m / k;
    rec.l_c = s_c / k;
    record(rec);
    if (st.evals_since_improvement >= cfg.patience) {
      st.early_stopped = true;
      spdlog::info("early stop at epoch {} (best epoch {})", st.epoch, st.best_epoch);
      break;
    }
  }
  save("last.ckpt", st.params);
  return st;
}

}  // namespace kgrec
