#include "kgrec/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kgrec {

namespace {

std::vector<std::size_t> sorted_unique(std::span<const std::size_t> ids) {
  std::vector<std::size_t> v(ids.begin(), ids.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

KgView make_kg_view(const KnowledgeGraph& kg, ViewKind kind, std::span<const TripletId> excluded) {
  KgView view;
  view.kind = kind;
  view.excluded = sorted_unique(excluded);
  std::vector<char> drop(kg.num_triplets(), 0);
  for (TripletId id : view.excluded) {
    if (id >= kg.num_triplets()) throw std::out_of_range("excluded triplet id " + std::to_string(id));
    drop[id] = 1;
  }
  const auto& offsets = kg.head_offsets();
  const auto& entries = kg.head_entries();
  const std::size_t keep = kg.num_triplets() - view.excluded.size();
  view.triplets.reserve(keep);
  view.heads.reserve(keep);
  view.relations.reserve(keep);
  view.tails.reserve(keep);
  view.offsets.assign(kg.num_entities() + 1, 0);
  for (Index h = 0; h < kg.num_entities(); ++h) {
    for (std::size_t i = offsets[h]; i < offsets[h + 1]; ++i) {
      const KgNeighbor& n = entries[i];
      if (drop[n.id]) continue;
      view.triplets.push_back(n.id);
      view.heads.push_back(h);
      view.relations.push_back(n.relation);
      view.tails.push_back(n.tail);
    }
    view.offsets[h + 1] = view.triplets.size();
  }
  return view;
}

UiView make_ui_view(const InteractionGraph& ui, ViewKind kind, std::span<const EdgeId> excluded) {
  UiView view;
  view.kind = kind;
  view.excluded = sorted_unique(excluded);
  view.num_users = ui.num_users();
  view.num_items = ui.num_items();
  std::vector<char> drop(ui.num_edges(), 0);
  for (EdgeId e : view.excluded) {
    if (e >= ui.num_edges()) throw std::out_of_range("excluded edge id " + std::to_string(e));
    drop[e] = 1;
  }
  view.user_offsets.assign(ui.num_users() + 1, 0);
  view.item_offsets.assign(ui.num_items() + 1, 0);
  const auto& edges = ui.edges();
  for (EdgeId e = 0; e < edges.size(); ++e) {
    if (drop[e]) continue;
    ++view.user_offsets[edges[e].first + 1];
    ++view.item_offsets[edges[e].second + 1];
  }
  std::partial_sum(view.user_offsets.begin(), view.user_offsets.end(), view.user_offsets.begin());
  std::partial_sum(view.item_offsets.begin(), view.item_offsets.end(), view.item_offsets.begin());
  const std::size_t keep = edges.size() - view.excluded.size();
  view.user_items.resize(keep);
  view.item_users.resize(keep);
  std::vector<std::size_t> ucur(view.user_offsets.begin(), view.user_offsets.end() - 1);
  std::vector<std::size_t> icur(view.item_offsets.begin(), view.item_offsets.end() - 1);
  for (EdgeId e = 0; e < edges.size(); ++e) {
    if (drop[e]) continue;
    const auto [u, v] = edges[e];
    view.user_items[ucur[u]++] = v;
    view.item_users[icur[v]++] = u;
  }
  return view;
}

ParamVars bind_params(Tape& tape, const ParamStore& params, bool requires_grad) {
  ParamVars p;
  for (const auto& [name, m] : params.tensors()) p.all.push_back(tape.leaf_ref(*m, requires_grad));
  p.entity = p.all[0];
  p.relation = p.all[1];
  p.user = p.all[2];
  p.attn_q = p.all[3];
  p.attn_k = p.all[4];
  p.mlp_u = {p.all[5], p.all[6], p.all[7], p.all[8]};
  p.mlp_k = {p.all[9], p.all[10], p.all[11], p.all[12]};
  if (p.all.size() > 13) {
    p.cf_user = p.all[13];
    p.cf_item = p.all[14];
  }
  return p;
}

Gradients collect_gradients(const Tape& tape, const ParamVars& vars, const ParamStore& params) {
  Gradients g = zero_gradients(params);
  for (std::size_t i = 0; i < vars.all.size(); ++i) {
    const Matrix& gi = tape.grad(vars.all[i]);
    if (!gi.empty()) g[i] = gi;
  }
  return g;
}

Var attention_logits(Tape& tape, const ParamVars& p, const KnowledgeGraph& kg) {
  const std::size_t n = kg.num_triplets();
  std::vector<Index> heads(n), rels(n), tails(n);
  for (TripletId id = 0; id < n; ++id) {
    const Triplet& t = kg.triplet(id);
    heads[id] = t.head;
    rels[id] = t.relation;
    tails[id] = t.tail;
  }
  const double d = static_cast<double>(tape.value(p.entity).cols());
  Var q = ops::matmul(tape, p.entity, p.attn_q);
  Var k = ops::matmul(tape, p.entity, p.attn_k);
  Var qh = ops::gather_rows(tape, q, std::move(heads));
  Var kt = ops::gather_rows(tape, k, std::move(tails));
  Var er = ops::gather_rows(tape, p.relation, std::move(rels));
  Var prod = ops::mul(tape, qh, ops::mul(tape, kt, er));
  return ops::scale(tape, ops::row_sum(tape, prod), 1.0 / std::sqrt(d));
}

Var view_weights(Tape& tape, Var logits, const KgView& view) {
  std::vector<Index> ids(view.triplets.begin(), view.triplets.end());
  Var f = ops::gather_rows(tape, logits, std::move(ids));
  return ops::segment_softmax(tape, f, view.offsets);
}

std::vector<Var> kg_aggregate(Tape& tape, Var entity0, Var relation, const KgView& view, Var omega, int layers) {
  if (layers < 0) throw std::invalid_argument("kg_aggregate: negative layer count");
  std::vector<Var> stack{entity0};
  if (layers == 0) return stack;
  Var rel_rows = ops::gather_rows(tape, relation, view.relations);
  for (int l = 1; l <= layers; ++l) {
    Var tail_rows = ops::gather_rows(tape, stack.back(), view.tails);
    Var msg = ops::mul(tape, rel_rows, tail_rows);
    stack.push_back(ops::segment_weighted_sum(tape, msg, omega, view.offsets, SegmentReduce::kMean));
  }
  return stack;
}

std::vector<Var> user_aggregate(Tape& tape, Var user0, const UiView& view, const std::vector<Var>& entity_stack,
                                int layers) {
  if (static_cast<int>(entity_stack.size()) < layers) {
    throw std::invalid_argument("user_aggregate: entity stack shorter than layer count");
  }
  std::vector<Var> stack{user0};
  if (layers == 0) return stack;
  Var ones = tape.constant(Matrix(view.user_items.size(), 1, 1.0));
  for (int l = 1; l <= layers; ++l) {
    Var rows = ops::gather_rows(tape, entity_stack[static_cast<std::size_t>(l - 1)], view.user_items);
    stack.push_back(ops::segment_weighted_sum(tape, rows, ones, view.user_offsets, SegmentReduce::kMean));
  }
  return stack;
}

Var encode_final(Tape& tape, const std::vector<Var>& stack, bool include_layer0) {
  if (stack.empty()) throw std::invalid_argument("encode_final: empty stack");
  const std::size_t first = include_layer0 ? 0 : 1;
  if (first >= stack.size()) {
    const Matrix& v = tape.value(stack[0]);
    return tape.constant(Matrix(v.rows(), v.cols()));
  }
  Var acc = stack[first];
  for (std::size_t l = first + 1; l < stack.size(); ++l) acc = ops::add(tape, acc, stack[l]);
  return acc;
}

LightGcnOutput lightgcn_encode(Tape& tape, Var user0, Var item0, const UiView& view, int layers,
                               bool include_layer0) {
  std::vector<double> udeg(view.num_users), ideg(view.num_items);
  for (std::size_t u = 0; u < view.num_users; ++u) {
    udeg[u] = static_cast<double>(view.user_offsets[u + 1] - view.user_offsets[u]);
  }
  for (std::size_t v = 0; v < view.num_items; ++v) {
    ideg[v] = static_cast<double>(view.item_offsets[v + 1] - view.item_offsets[v]);
  }
  Matrix wu(view.user_items.size(), 1), wi(view.item_users.size(), 1);
  for (std::size_t u = 0; u < view.num_users; ++u) {
    for (std::size_t i = view.user_offsets[u]; i < view.user_offsets[u + 1]; ++i) {
      wu[i] = 1.0 / std::sqrt(udeg[u] * ideg[view.user_items[i]]);
    }
  }
  for (std::size_t v = 0; v < view.num_items; ++v) {
    for (std::size_t i = view.item_offsets[v]; i < view.item_offsets[v + 1]; ++i) {
      wi[i] = 1.0 / std::sqrt(ideg[v] * udeg[view.item_users[i]]);
    }
  }
  Var wu_var = tape.constant(std::move(wu));
  Var wi_var = tape.constant(std::move(wi));

  LightGcnOutput out;
  out.user_layers.push_back(user0);
  out.item_layers.push_back(item0);
  for (int l = 1; l <= layers; ++l) {
    Var from_items = ops::gather_rows(tape, out.item_layers.back(), view.user_items);
    Var from_users = ops::gather_rows(tape, out.user_layers.back(), view.item_users);
    out.user_layers.push_back(
        ops::segment_weighted_sum(tape, from_items, wu_var, view.user_offsets, SegmentReduce::kSum));
    out.item_layers.push_back(
        ops::segment_weighted_sum(tape, from_users, wi_var, view.item_offsets, SegmentReduce::kSum));
  }
  out.users = encode_final(tape, out.user_layers, include_layer0);
  out.items = encode_final(tape, out.item_layers, include_layer0);
  return out;
}

Var project_contrastive(Tape& tape, const MlpVars& mlp, Var x) {
  Var h = ops::sigmoid(tape, ops::add_row_bias(tape, ops::matmul(tape, x, mlp.w1), mlp.b1));
  return ops::add_row_bias(tape, ops::matmul(tape, h, mlp.w2), mlp.b2);
}

double predict(const Matrix& user_out, const Matrix& entity_out, Index u, Index v) {
  if (u >= user_out.rows()) throw ContractViolation("user id " + std::to_string(u) + " out of range");
  if (v >= entity_out.rows()) throw ContractViolation("item id " + std::to_string(v) + " out of range");
  return dot(user_out.row(u), entity_out.row(v));
}

EncodedModel encode_for_eval(const ParamStore& params, const KnowledgeGraph& kg, const InteractionGraph& ui,
                             const ModelOptions& opts, bool with_projections) {
  Tape tape;
  ParamVars p = bind_params(tape, params, false);
  const KgView kg_view = make_kg_view(kg, ViewKind::kFullKg);
  const UiView ui_view = make_ui_view(ui, ViewKind::kFullUi);
  Var logits = attention_logits(tape, p, kg);
  Var omega = view_weights(tape, logits, kg_view);
  auto estack = kg_aggregate(tape, p.entity, p.relation, kg_view, omega, opts.layers);
  auto ustack = user_aggregate(tape, p.user, ui_view, estack, opts.layers);
  EncodedModel out;
  out.entity_out = tape.value(encode_final(tape, estack, opts.include_layer0));
  out.user_out = tape.value(encode_final(tape, ustack, opts.include_layer0));
  if (with_projections) {
    const std::size_t ni = ui.num_items();
    Var user0 = p.cf_user.valid() ? p.cf_user : p.user;
    Var item0 = p.cf_item.valid() ? p.cf_item : ops::slice_rows(tape, p.entity, 0, ni);
    auto cf = lightgcn_encode(tape, user0, item0, ui_view, opts.layers, opts.include_layer0);
    Var kg_items = ops::slice_rows(tape, encode_final(tape, estack, opts.include_layer0), 0, ni);
    out.z_u = tape.value(project_contrastive(tape, p.mlp_u, cf.items));
    out.z_k = tape.value(project_contrastive(tape, p.mlp_k, kg_items));
  }
  return out;
}

}  // namespace kgrec
