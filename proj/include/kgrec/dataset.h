#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kgrec/config.h"
#include "kgrec/graphstore.h"

namespace kgrec {

struct Dataset {
  std::string name;
  InteractionGraph train;
  InteractionGraph valid;
  InteractionGraph test;
  KnowledgeGraph kg;
  std::vector<std::string> relation_names;  // base relations; may be empty
  std::vector<int> item_category;           // per item, -1 when unknown; may be empty
  std::vector<std::string> category_names;
  std::optional<Index> planted_relation;  // toy data only
  std::vector<std::filesystem::path> files;  // inputs, for fingerprinting
};

struct Split {
  InteractionGraph train;
  InteractionGraph valid;
  InteractionGraph test;
};

// Each user's items are shuffled and cut 70/10/20 (rounded down for valid and
// test), so every user with at least one interaction keeps one for training.
Split split_user_stratified(const InteractionGraph& all, std::uint64_t seed, double train_ratio = 0.7,
                            double valid_ratio = 0.1);

// Reads train.txt, test.txt, optional valid.txt and kg_final.txt from `dir`.
// Without test.txt the interactions in train.txt are auto-split with `seed`.
// Optional relation_names.txt (one per line) and item_categories.txt
// ("item category_name" per line) feed the explainability reports.
Dataset load_dataset(const std::filesystem::path& dir, bool add_inverse, std::uint64_t seed);

// Planted-structure synthetic data. Relation 0 links each item to its cluster,
// and users prefer a few clusters, so relation 0 is the preference-predictive one.
Dataset make_toy_dataset(const ToyConfig& toy, std::uint64_t seed, bool add_inverse);

// "toy" builds the synthetic set; anything else is a directory.
Dataset resolve_dataset(const std::string& spec, const TrainConfig& cfg);

}  // namespace kgrec
