#include "kgrec/graphstore.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace kgrec {

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

// Splits a line into non-negative integers; throws ParseError on anything else.
std::vector<std::uint64_t> parse_ids(const std::string& line, const std::string& path, std::size_t lineno) {
  std::vector<std::uint64_t> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
    if (ec != std::errc() || ptr != line.data() + j) {
      throw ParseError(path, lineno, "malformed token '" + line.substr(i, j - i) + "'");
    }
    if (v > std::numeric_limits<Index>::max()) {
      throw ParseError(path, lineno, "id too large '" + line.substr(i, j - i) + "'");
    }
    out.push_back(v);
    i = j;
  }
  return out;
}

}  // namespace

InteractionGraph InteractionGraph::from_edges(std::size_t num_users, std::size_t num_items,
                                              std::vector<std::pair<Index, Index>> edges,
                                              std::size_t* duplicates) {
  for (const auto& [u, v] : edges) {
    if (u >= num_users || v >= num_items) {
      throw ValidationError("interaction (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") outside " + std::to_string(num_users) + " users x " +
                            std::to_string(num_items) + " items");
    }
  }
  std::sort(edges.begin(), edges.end());
  const std::size_t before = edges.size();
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (duplicates) *duplicates = before - edges.size();

  InteractionGraph g;
  g.num_users_ = num_users;
  g.num_items_ = num_items;
  g.edges_ = std::move(edges);

  g.user_offsets_.assign(num_users + 1, 0);
  g.item_offsets_.assign(num_items + 1, 0);
  for (const auto& [u, v] : g.edges_) {
    ++g.user_offsets_[u + 1];
    ++g.item_offsets_[v + 1];
  }
  std::partial_sum(g.user_offsets_.begin(), g.user_offsets_.end(), g.user_offsets_.begin());
  std::partial_sum(g.item_offsets_.begin(), g.item_offsets_.end(), g.item_offsets_.begin());

  g.user_targets_.resize(g.edges_.size());
  g.item_targets_.resize(g.edges_.size());
  g.item_edge_ids_.resize(g.edges_.size());
  std::vector<std::size_t> cursor(g.item_offsets_.begin(), g.item_offsets_.end() - 1);
  for (EdgeId e = 0; e < g.edges_.size(); ++e) {
    const auto [u, v] = g.edges_[e];
    g.user_targets_[e] = v;
    const std::size_t slot = cursor[v]++;
    g.item_targets_[slot] = u;  // edges are user-sorted, so users land ascending
    g.item_edge_ids_[slot] = e;
  }
  return g;
}

std::span<const Index> InteractionGraph::items_of(Index u) const {
  if (u >= num_users_) throw ContractViolation("user id " + std::to_string(u) + " out of range");
  return {user_targets_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
}

std::span<const Index> InteractionGraph::users_of(Index v) const {
  if (v >= num_items_) throw ContractViolation("item id " + std::to_string(v) + " out of range");
  return {item_targets_.data() + item_offsets_[v], item_offsets_[v + 1] - item_offsets_[v]};
}

std::span<const EdgeId> InteractionGraph::item_edge_ids(Index v) const {
  if (v >= num_items_) throw ContractViolation("item id " + std::to_string(v) + " out of range");
  return {item_edge_ids_.data() + item_offsets_[v], item_offsets_[v + 1] - item_offsets_[v]};
}

bool InteractionGraph::has_edge(Index u, Index v) const {
  if (u >= num_users_) return false;
  auto items = items_of(u);
  return std::binary_search(items.begin(), items.end(), v);
}

KnowledgeGraph KnowledgeGraph::from_triplets(std::size_t num_entities, std::size_t num_relations,
                                             std::vector<Triplet> triplets, bool add_inverse,
                                             std::size_t* duplicates) {
  for (const auto& t : triplets) {
    if (t.head >= num_entities || t.tail >= num_entities) {
      throw ValidationError("triplet entity id exceeds entity count " + std::to_string(num_entities));
    }
    if (t.relation >= num_relations) {
      throw ValidationError("triplet relation id exceeds relation count " + std::to_string(num_relations));
    }
  }
  // Dedup while keeping first-occurrence order.
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return triplets[a] < triplets[b]; });
  std::vector<char> keep(triplets.size(), 1);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (triplets[order[i]] == triplets[order[i - 1]]) keep[order[i]] = 0;
  }
  std::vector<Triplet> unique;
  unique.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    if (keep[i]) unique.push_back(triplets[i]);
  }
  if (duplicates) *duplicates = triplets.size() - unique.size();

  KnowledgeGraph g;
  g.num_entities_ = num_entities;
  g.num_base_relations_ = num_relations;
  g.num_relations_ = add_inverse ? 2 * num_relations : num_relations;
  g.inverse_ = add_inverse;
  g.triplets_ = std::move(unique);
  if (add_inverse) {
    const std::size_t base = g.triplets_.size();
    g.triplets_.reserve(2 * base);
    for (std::size_t i = 0; i < base; ++i) {
      const Triplet t = g.triplets_[i];
      g.triplets_.push_back({t.tail, static_cast<Index>(t.relation + num_relations), t.head});
    }
  }

  g.head_offsets_.assign(num_entities + 1, 0);
  for (const auto& t : g.triplets_) ++g.head_offsets_[t.head + 1];
  std::partial_sum(g.head_offsets_.begin(), g.head_offsets_.end(), g.head_offsets_.begin());
  g.head_entries_.resize(g.triplets_.size());
  std::vector<std::size_t> cursor(g.head_offsets_.begin(), g.head_offsets_.end() - 1);
  for (TripletId id = 0; id < g.triplets_.size(); ++id) {
    const Triplet& t = g.triplets_[id];
    g.head_entries_[cursor[t.head]++] = {t.relation, t.tail, id};
  }
  return g;
}

std::span<const KgNeighbor> KnowledgeGraph::neighbors(Index h) const {
  if (h >= num_entities_) throw ContractViolation("entity id " + std::to_string(h) + " out of range");
  return {head_entries_.data() + head_offsets_[h], head_offsets_[h + 1] - head_offsets_[h]};
}

std::vector<Triplet> KnowledgeGraph::base_triplets() const {
  return {triplets_.begin(), triplets_.begin() + static_cast<std::ptrdiff_t>(num_base_triplets())};
}

std::span<const KgNeighbor> neighbors_kg(const KnowledgeGraph& g, Index h) { return g.neighbors(h); }

InteractionGraph load_interactions(const std::filesystem::path& path, const GraphCounts& counts,
                                   InteractionLoadStats* stats) {
  auto in = open_or_throw(path);
  InteractionLoadStats local;
  std::vector<std::pair<Index, Index>> edges;
  std::size_t max_user = 0, max_item = 0;
  bool any_user = false, any_item = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto ids = parse_ids(line, path.string(), lineno);
    if (ids.empty()) continue;
    ++local.lines;
    const auto u = static_cast<Index>(ids[0]);
    max_user = std::max<std::size_t>(max_user, u);
    any_user = true;
    if (ids.size() == 1) {
      ++local.users_without_items;
      continue;
    }
    for (std::size_t i = 1; i < ids.size(); ++i) {
      const auto v = static_cast<Index>(ids[i]);
      max_item = std::max<std::size_t>(max_item, v);
      any_item = true;
      edges.emplace_back(u, v);
    }
  }
  const std::size_t nu = counts.num_users.value_or(any_user ? max_user + 1 : 0);
  const std::size_t ni = counts.num_items.value_or(any_item ? max_item + 1 : 0);
  auto g = InteractionGraph::from_edges(nu, ni, std::move(edges), &local.duplicates);
  local.edges = g.num_edges();
  if (stats) *stats = local;
  return g;
}

KnowledgeGraph load_kg(const std::filesystem::path& path, bool add_inverse, const KgCounts& counts,
                       KgLoadStats* stats) {
  auto in = open_or_throw(path);
  KgLoadStats local;
  std::vector<Triplet> triplets;
  std::size_t max_entity = 0, max_relation = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto ids = parse_ids(line, path.string(), lineno);
    if (ids.empty()) continue;
    if (ids.size() != 3) throw ParseError(path.string(), lineno, "expected 'head relation tail'");
    ++local.lines;
    Triplet t{static_cast<Index>(ids[0]), static_cast<Index>(ids[1]), static_cast<Index>(ids[2])};
    if (t.head == t.tail) ++local.self_loops;
    max_entity = std::max<std::size_t>({max_entity, t.head, t.tail});
    max_relation = std::max<std::size_t>(max_relation, t.relation);
    triplets.push_back(t);
  }
  const bool any = !triplets.empty();
  const std::size_t ne = counts.num_entities.value_or(any ? max_entity + 1 : 0);
  const std::size_t nr = counts.num_relations.value_or(any ? max_relation + 1 : 0);
  auto g = KnowledgeGraph::from_triplets(ne, nr, std::move(triplets), add_inverse, &local.duplicates);
  local.triplets = g.num_base_triplets();
  if (stats) *stats = local;
  return g;
}

CoreFilterResult ten_core_filter(const InteractionGraph& graph, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ten_core_filter: k must be >= 1");
  const std::size_t nu = graph.num_users(), ni = graph.num_items();
  std::vector<std::size_t> udeg(nu), ideg(ni);
  for (Index u = 0; u < nu; ++u) udeg[u] = graph.user_degree(u);
  for (Index v = 0; v < ni; ++v) ideg[v] = graph.item_degree(v);
  std::vector<char> ualive(nu, 1), ialive(ni, 1);

  // Worklist peeling: each removal decrements the degrees of live neighbours.
  std::vector<std::pair<bool, Index>> work;
  for (Index u = 0; u < nu; ++u) {
    if (udeg[u] < k) work.emplace_back(true, u);
  }
  for (Index v = 0; v < ni; ++v) {
    if (ideg[v] < k) work.emplace_back(false, v);
  }
  while (!work.empty()) {
    auto [is_user, id] = work.back();
    work.pop_back();
    if (is_user) {
      if (!ualive[id]) continue;
      ualive[id] = 0;
      for (Index v : graph.items_of(id)) {
        if (ialive[v] && --ideg[v] < k) work.emplace_back(false, v);
      }
    } else {
      if (!ialive[id]) continue;
      ialive[id] = 0;
      for (Index u : graph.users_of(id)) {
        if (ualive[u] && --udeg[u] < k) work.emplace_back(true, u);
      }
    }
  }

  CoreFilterResult res;
  res.user_map.assign(nu, -1);
  res.item_map.assign(ni, -1);
  std::int64_t next = 0;
  for (Index u = 0; u < nu; ++u) {
    if (ualive[u]) res.user_map[u] = next++;
  }
  const auto new_users = static_cast<std::size_t>(next);
  next = 0;
  for (Index v = 0; v < ni; ++v) {
    if (ialive[v]) res.item_map[v] = next++;
  }
  const auto new_items = static_cast<std::size_t>(next);
  std::vector<std::pair<Index, Index>> edges;
  for (const auto& [u, v] : graph.edges()) {
    if (ualive[u] && ialive[v]) {
      edges.emplace_back(static_cast<Index>(res.user_map[u]), static_cast<Index>(res.item_map[v]));
    }
  }
  if (edges.empty()) {
    throw EmptyGraphError("interaction graph is empty after " + std::to_string(k) + "-core filtering");
  }
  res.graph = InteractionGraph::from_edges(new_users, new_items, std::move(edges));
  return res;
}

KnowledgeGraph remap_kg_items(const KnowledgeGraph& kg, std::span<const std::int64_t> item_map,
                              std::size_t num_old_items) {
  std::size_t kept = 0;
  for (auto m : item_map) kept += m >= 0 ? 1 : 0;
  std::vector<Index> entity_map(kg.num_entities());
  Index next = static_cast<Index>(kept);
  for (Index e = 0; e < kg.num_entities(); ++e) {
    if (e < num_old_items && e < item_map.size() && item_map[e] >= 0) {
      entity_map[e] = static_cast<Index>(item_map[e]);
    } else {
      entity_map[e] = next++;
    }
  }
  std::vector<Triplet> base;
  for (const auto& t : kg.base_triplets()) {
    base.push_back({entity_map[t.head], t.relation, entity_map[t.tail]});
  }
  return KnowledgeGraph::from_triplets(kg.num_entities(), kg.num_base_relations(), std::move(base),
                                       kg.inverse_augmented());
}

std::string format_stats(const InteractionLoadStats& s) {
  std::ostringstream os;
  os << "lines=" << s.lines << "\nedges=" << s.edges << "\nduplicates=" << s.duplicates
     << "\nusers_without_items=" << s.users_without_items << "\n";
  return os.str();
}

std::string format_stats(const KgLoadStats& s) {
  std::ostringstream os;
  os << "lines=" << s.lines << "\ntriplets=" << s.triplets << "\nduplicates=" << s.duplicates
     << "\nself_loops=" << s.self_loops << "\n";
  return os.str();
}

}  // namespace kgrec
