#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kgrec {

using Index = std::uint32_t;
using EdgeId = std::size_t;
using TripletId = std::size_t;

// Malformed input file. The message carries the path and 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Ids or counts that contradict each other or the configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Out-of-range id passed to an accessor.
class ContractViolation : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class EmptyGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary user-item graph with CSR adjacency in both directions. Edges are
// sorted by (user, item); an edge id is its position in that order.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  // Deduplicates; throws ValidationError for ids outside the given counts.
  static InteractionGraph from_edges(std::size_t num_users, std::size_t num_items,
                                     std::vector<std::pair<Index, Index>> edges,
                                     std::size_t* duplicates = nullptr);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<std::pair<Index, Index>>& edges() const { return edges_; }

  std::span<const Index> items_of(Index u) const;
  std::span<const Index> users_of(Index v) const;
  // Edge ids aligned with users_of(v).
  std::span<const EdgeId> item_edge_ids(Index v) const;
  // Edge ids of user u are the contiguous range [user_offset(u), user_offset(u+1)).
  std::size_t user_offset(Index u) const { return user_offsets_.at(u); }

  std::size_t user_degree(Index u) const { return items_of(u).size(); }
  std::size_t item_degree(Index v) const { return users_of(v).size(); }
  bool has_edge(Index u, Index v) const;

  const std::vector<std::size_t>& user_offsets() const { return user_offsets_; }
  const std::vector<Index>& user_targets() const { return user_targets_; }
  const std::vector<std::size_t>& item_offsets() const { return item_offsets_; }
  const std::vector<Index>& item_targets() const { return item_targets_; }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<std::pair<Index, Index>> edges_;
  std::vector<std::size_t> user_offsets_{0};
  std::vector<Index> user_targets_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<Index> item_targets_;
  std::vector<EdgeId> item_edge_ids_;
};

struct Triplet {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;
  auto operator<=>(const Triplet&) const = default;
};

struct KgNeighbor {
  Index relation;
  Index tail;
  TripletId id;
};

// Immutable triplet store. Items are the entity prefix [0, num_items).
// When inverse-augmented, triplet i + T/2 is the inverse of triplet i.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph from_triplets(std::size_t num_entities, std::size_t num_relations,
                                      std::vector<Triplet> triplets, bool add_inverse,
                                      std::size_t* duplicates = nullptr);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_base_relations() const { return num_base_relations_; }
  bool inverse_augmented() const { return inverse_; }
  std::size_t num_triplets() const { return triplets_.size(); }
  std::size_t num_base_triplets() const { return inverse_ ? triplets_.size() / 2 : triplets_.size(); }
  const std::vector<Triplet>& triplets() const { return triplets_; }
  const Triplet& triplet(TripletId id) const { return triplets_.at(id); }

  // Slice of head_csr for entity h; throws ContractViolation when h is out of range.
  std::span<const KgNeighbor> neighbors(Index h) const;
  std::size_t degree(Index h) const { return neighbors(h).size(); }
  const std::vector<std::size_t>& head_offsets() const { return head_offsets_; }
  const std::vector<KgNeighbor>& head_entries() const { return head_entries_; }

  // Base (non-inverse) triplets in storage order.
  std::vector<Triplet> base_triplets() const;
  Index item_to_entity(Index item) const { return item; }

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::size_t num_base_relations_ = 0;
  bool inverse_ = false;
  std::vector<Triplet> triplets_;
  std::vector<std::size_t> head_offsets_{0};
  std::vector<KgNeighbor> head_entries_;
};

struct InteractionLoadStats {
  std::size_t lines = 0;
  std::size_t edges = 0;
  std::size_t duplicates = 0;
  std::size_t users_without_items = 0;  // lines with a user id but no items, skipped
};

struct KgLoadStats {
  std::size_t lines = 0;
  std::size_t triplets = 0;  // after dedup, before inverse augmentation
  std::size_t duplicates = 0;
  std::size_t self_loops = 0;
};

struct GraphCounts {
  std::optional<std::size_t> num_users;
  std::optional<std::size_t> num_items;
};

// Adjacency-list file: "user item item ...", one user per line.
InteractionGraph load_interactions(const std::filesystem::path& path, const GraphCounts& counts = {},
                                   InteractionLoadStats* stats = nullptr);

struct KgCounts {
  std::optional<std::size_t> num_entities;
  std::optional<std::size_t> num_relations;
};

// One "head relation tail" per line.
KnowledgeGraph load_kg(const std::filesystem::path& path, bool add_inverse, const KgCounts& counts = {},
                       KgLoadStats* stats = nullptr);

struct CoreFilterResult {
  InteractionGraph graph;
  std::vector<std::int64_t> user_map;  // old id -> new id, -1 when removed
  std::vector<std::int64_t> item_map;
};

// Iteratively drops users and items with degree < k, then compacts ids.
CoreFilterResult ten_core_filter(const InteractionGraph& graph, std::size_t k = 10);

// Renumbers entities after item compaction: surviving items first (by new id),
// then every other entity in original order. All triplets are kept.
KnowledgeGraph remap_kg_items(const KnowledgeGraph& kg, std::span<const std::int64_t> item_map,
                              std::size_t num_old_items);

std::span<const KgNeighbor> neighbors_kg(const KnowledgeGraph& g, Index h);

std::string format_stats(const InteractionLoadStats& s);
std::string format_stats(const KgLoadStats& s);

}  // namespace kgrec
