#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kgrec/errors.h"
#include "kgrec/objectives.h"
#include "kgrec/rationale.h"

namespace kgrec {

// Knobs of the planted-structure synthetic dataset.
struct ToyConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 100;
  std::size_t num_entities = 300;
  std::size_t num_relations = 5;
  std::size_t clusters = 10;
  std::size_t prefs_per_user = 2;
  std::size_t min_interactions = 10;
  std::size_t max_interactions = 16;
  double noise_interactions = 0.1;  // share of a user's items drawn uniformly
  std::size_t tags_per_item = 2;
};

struct TrainConfig {
  std::size_t dim = 64;
  int layers = 2;
  double lr = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 1024;
  std::size_t k_m = 512;
  double rho_k = 0.5;       // fraction of triplets dropped for the contrastive KG view
  std::int64_t rho_u = -1;  // interaction edges dropped per step; -1 resolves to half the training edges
  double tau = 0.2;
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 2023;
  std::size_t eval_every = 1;
  std::size_t patience = 10;
  std::size_t workers = 1;
  std::size_t topn = 20;
  Reduction loss_reduction = Reduction::kSum;

  bool inverse_relations = true;
  bool literal_phi_softmax = false;
  bool literal_infonce_denominator = false;
  bool include_layer0 = true;
  bool deterministic_noise = false;  // disables Gumbel perturbation
  bool rec_on_masked = true;         // recommendation reuses the masked-KG encodings
  bool separate_cf_tables = false;   // LightGCN view gets its own embedding tables
  SelectionMode mask_mode = SelectionMode::kRationale;
  SelectionMode aug_mode = SelectionMode::kRationale;

  ToyConfig toy;
};

// Parses "key = value" lines grouped under optional [section] headers.
// Keys under [toy] set ToyConfig fields; every other section is organisational.
// Unknown keys and malformed values raise ConfigError naming the field.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

// Sets one field by name ("k_m", "toy.num_users", ...).
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

// Every field with its current value, in the same text format parse_config reads.
std::string dump_config(const TrainConfig& cfg);

// Hyper-parameter grids searched for the masking size, the keep proportion and the temperature.
std::vector<std::string> sweep_values(const std::string& param);

// Resolved rho_u for a graph with `num_edges` training interactions.
std::size_t resolve_rho_u(const TrainConfig& cfg, std::size_t num_edges);

// Throws ConfigError for hard violations; returns warnings for soft ones.
std::vector<std::string> validate_config(const TrainConfig& cfg, std::size_t num_triplets, std::size_t num_edges);

}  // namespace kgrec
