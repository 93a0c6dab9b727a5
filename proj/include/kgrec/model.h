#pragma once

#include <span>
#include <vector>

#include "kgrec/graphstore.h"
#include "kgrec/params.h"
#include "kgrec/tape.h"

namespace kgrec {

enum class ViewKind { kMaskedKg, kAugmentedKg, kFullKg, kAugmentedUi, kFullUi };

// A knowledge graph with some triplets excluded. Surviving triplets are laid
// out grouped by head so per-head reductions run over contiguous segments.
struct KgView {
  ViewKind kind = ViewKind::kFullKg;
  std::vector<TripletId> excluded;  // sorted
  std::vector<TripletId> triplets;
  std::vector<Index> heads;
  std::vector<Index> relations;
  std::vector<Index> tails;
  std::vector<std::size_t> offsets;  // num_entities + 1

  std::size_t num_entities() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t degree(Index h) const { return offsets[h + 1] - offsets[h]; }
};

KgView make_kg_view(const KnowledgeGraph& kg, ViewKind kind, std::span<const TripletId> excluded = {});

// An interaction graph with some edges excluded, CSR in both directions.
struct UiView {
  ViewKind kind = ViewKind::kFullUi;
  std::vector<EdgeId> excluded;  // sorted
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::size_t> user_offsets;
  std::vector<Index> user_items;
  std::vector<std::size_t> item_offsets;
  std::vector<Index> item_users;
};

UiView make_ui_view(const InteractionGraph& ui, ViewKind kind, std::span<const EdgeId> excluded = {});

struct ModelOptions {
  int layers = 2;
  bool include_layer0 = true;
};

struct MlpVars {
  Var w1, b1, w2, b2;
};

struct ParamVars {
  Var entity, relation, user, attn_q, attn_k;
  MlpVars mlp_u, mlp_k;
  Var cf_user, cf_item;  // invalid unless the store has separate CF tables
  std::vector<Var> all;  // aligned with ParamStore::tensors()
};

// Leaves referencing the store's tensors; the store must outlive the tape.
ParamVars bind_params(Tape& tape, const ParamStore& params, bool requires_grad = true);
Gradients collect_gradients(const Tape& tape, const ParamVars& vars, const ParamStore& params);

// Attention logits for every triplet, in TripletId order (T x 1).
Var attention_logits(Tape& tape, const ParamVars& p, const KnowledgeGraph& kg);
// Softmax of the logits over each head's surviving triplets, in view order.
Var view_weights(Tape& tape, Var logits, const KgView& view);

// Layer stack [e^(0), ..., e^(L)]; e^(l)_h = 1/|N_h| * sum omega * e_r (*) e_t^(l-1).
std::vector<Var> kg_aggregate(Tape& tape, Var entity0, Var relation, const KgView& view, Var omega, int layers);
// Layer stack [u^(0), ..., u^(L)]; u^(l) is the mean of the user's item rows of e^(l-1).
std::vector<Var> user_aggregate(Tape& tape, Var user0, const UiView& view, const std::vector<Var>& entity_stack,
                                int layers);
Var encode_final(Tape& tape, const std::vector<Var>& stack, bool include_layer0 = true);

struct LightGcnOutput {
  std::vector<Var> user_layers;
  std::vector<Var> item_layers;
  Var users;
  Var items;
};

// Symmetric 1/sqrt(|N_u||N_v|) propagation over the view; finals sum every layer.
LightGcnOutput lightgcn_encode(Tape& tape, Var user0, Var item0, const UiView& view, int layers,
                               bool include_layer0 = true);

Var project_contrastive(Tape& tape, const MlpVars& mlp, Var x);

double predict(const Matrix& user_out, const Matrix& entity_out, Index u, Index v);

// Noise-free encodings on the full graphs, used for ranking and diagnostics.
struct EncodedModel {
  Matrix user_out;    // |U| x d
  Matrix entity_out;  // |E| x d
  Matrix z_u;         // items x d, CF-view projection (unnormalised)
  Matrix z_k;         // items x d, KG-view projection (unnormalised)
};

EncodedModel encode_for_eval(const ParamStore& params, const KnowledgeGraph& kg, const InteractionGraph& ui,
                             const ModelOptions& opts, bool with_projections = true);

}  // namespace kgrec
