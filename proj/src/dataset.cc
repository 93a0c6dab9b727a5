#include "kgrec/dataset.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "kgrec/rng.h"

namespace kgrec {

namespace fs = std::filesystem;

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

InteractionGraph resize(const InteractionGraph& g, std::size_t nu, std::size_t ni) {
  return InteractionGraph::from_edges(nu, ni, g.edges());
}

}  // namespace

Split split_user_stratified(const InteractionGraph& all, std::uint64_t seed, double train_ratio,
                            double valid_ratio) {
  if (!(train_ratio > 0.0) || valid_ratio < 0.0 || train_ratio + valid_ratio > 1.0) {
    throw ValidationError("invalid split ratios");
  }
  std::vector<std::pair<Index, Index>> tr, va, te;
  for (Index u = 0; u < all.num_users(); ++u) {
    auto span = all.items_of(u);
    std::vector<Index> items(span.begin(), span.end());
    if (items.empty()) continue;
    Rng rng = make_rng(seed, {kStreamSplit, u});
    shuffle(items, rng);
    const std::size_t n = items.size();
    std::size_t n_test = static_cast<std::size_t>((1.0 - train_ratio - valid_ratio) * n + 1e-9);
    std::size_t n_valid = static_cast<std::size_t>(valid_ratio * n + 1e-9);
    if (n_test + n_valid >= n) {
      // Always keep one training interaction.
      const std::size_t spare = n - 1;
      n_test = std::min(n_test, spare);
      n_valid = std::min(n_valid, spare - n_test);
    }
    const std::size_t n_train = n - n_test - n_valid;
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = i < n_train ? tr : (i < n_train + n_valid ? va : te);
      dst.emplace_back(u, items[i]);
    }
  }
  Split s;
  s.train = InteractionGraph::from_edges(all.num_users(), all.num_items(), std::move(tr));
  s.valid = InteractionGraph::from_edges(all.num_users(), all.num_items(), std::move(va));
  s.test = InteractionGraph::from_edges(all.num_users(), all.num_items(), std::move(te));
  return s;
}

Dataset load_dataset(const fs::path& dir, bool add_inverse, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  Dataset d;
  d.name = dir.filename().string();
  const fs::path train_p = dir / "train.txt", valid_p = dir / "valid.txt", test_p = dir / "test.txt",
                 kg_p = dir / "kg_final.txt";
  for (const auto& p : {train_p, kg_p}) {
    if (!fs::exists(p)) throw std::runtime_error("missing dataset file: " + p.string());
  }
  InteractionGraph train = load_interactions(train_p);
  std::optional<InteractionGraph> valid, test;
  d.files.push_back(train_p);
  if (fs::exists(test_p)) {
    test = load_interactions(test_p);
    d.files.push_back(test_p);
  }
  if (fs::exists(valid_p)) {
    valid = load_interactions(valid_p);
    d.files.push_back(valid_p);
  }
  KnowledgeGraph raw = load_kg(kg_p, false);
  d.files.push_back(kg_p);

  std::size_t nu = train.num_users(), ni = train.num_items();
  for (const auto* g : {test ? &*test : nullptr, valid ? &*valid : nullptr}) {
    if (!g) continue;
    nu = std::max(nu, g->num_users());
    ni = std::max(ni, g->num_items());
  }
  const std::size_t ne = std::max(raw.num_entities(), ni);
  d.kg = KnowledgeGraph::from_triplets(ne, raw.num_relations(), raw.triplets(), add_inverse);

  if (!test) {
    Split s = split_user_stratified(resize(train, nu, ni), seed);
    d.train = std::move(s.train);
    d.valid = std::move(s.valid);
    d.test = std::move(s.test);
  } else {
    d.train = resize(train, nu, ni);
    d.test = resize(*test, nu, ni);
    if (valid) {
      d.valid = resize(*valid, nu, ni);
    } else {
      // Carve validation out of training so tuning never sees test.
      Split s = split_user_stratified(d.train, seed, 0.875, 0.125);
      d.train = std::move(s.train);
      d.valid = std::move(s.valid);
    }
  }

  const fs::path names_p = dir / "relation_names.txt";
  if (fs::exists(names_p)) {
    std::ifstream in(names_p);
    std::string line;
    while (std::getline(in, line)) d.relation_names.push_back(line);
    d.files.push_back(names_p);
  }
  const fs::path cats_p = dir / "item_categories.txt";
  if (fs::exists(cats_p)) {
    std::ifstream in(cats_p);
    std::map<std::string, int> ids;
    d.item_category.assign(ni, -1);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream is(line);
      long long item;
      std::string cat;
      if (!(is >> item >> cat)) continue;
      if (item < 0 || static_cast<std::size_t>(item) >= ni) {
        throw ParseError(cats_p.string(), lineno, "item id out of range");
      }
      auto [it, inserted] = ids.emplace(cat, static_cast<int>(d.category_names.size()));
      if (inserted) d.category_names.push_back(cat);
      d.item_category[item] = it->second;
    }
    d.files.push_back(cats_p);
  }
  return d;
}

Dataset make_toy_dataset(const ToyConfig& toy, std::uint64_t seed, bool add_inverse) {
  const std::size_t I = toy.num_items, C = toy.clusters;
  if (I == 0 || C == 0 || toy.num_users == 0) throw ValidationError("toy dataset needs users, items and clusters");
  if (toy.num_entities < I + C + 1) throw ValidationError("toy dataset needs num_entities > num_items + clusters");
  if (toy.num_relations == 0) throw ValidationError("toy dataset needs at least one relation");
  if (toy.prefs_per_user == 0 || toy.prefs_per_user > C) throw ValidationError("toy prefs_per_user out of range");
  if (toy.min_interactions == 0 || toy.min_interactions > toy.max_interactions) {
    throw ValidationError("toy interaction range is empty");
  }
  Rng rng = make_rng(seed, {kStreamToy});
  const std::size_t A = toy.num_entities - I - C;  // attribute entities
  const Index attr0 = static_cast<Index>(I + C);
  auto attr = [&](std::size_t k) { return static_cast<Index>(attr0 + k); };

  std::vector<Index> order(I);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::vector<Index> cluster_of(I);
  std::vector<std::vector<Index>> members(C);
  for (std::size_t k = 0; k < I; ++k) {
    cluster_of[order[k]] = static_cast<Index>(k % C);
    members[k % C].push_back(order[k]);
  }
  for (auto& m : members) std::sort(m.begin(), m.end());

  std::vector<Triplet> t;
  const std::size_t R = toy.num_relations;
  for (Index v = 0; v < I; ++v) t.push_back({v, 0, static_cast<Index>(I + cluster_of[v])});
  if (R > 1) {
    for (Index v = 0; v < I; ++v) {
      for (std::size_t k = 0; k < toy.tags_per_item; ++k) t.push_back({v, 1, attr(uniform_index(rng, A))});
    }
  }
  if (R > 2) {
    for (std::size_t k = 0; k < A / 2; ++k) {
      t.push_back({attr(uniform_index(rng, A)), 2, attr(uniform_index(rng, A))});
    }
  }
  if (R > 3) {
    for (std::size_t c = 0; c < C; ++c) {
      for (int k = 0; k < 3; ++k) t.push_back({static_cast<Index>(I + c), 3, attr(uniform_index(rng, A))});
    }
  }
  if (R > 4) {
    const std::size_t creators = std::max<std::size_t>(1, std::min<std::size_t>(A, 20));
    for (Index v = 0; v < I; ++v) t.push_back({v, 4, attr(uniform_index(rng, creators))});
  }
  for (std::size_t r = 5; r < R; ++r) {
    for (Index v = 0; v < I; ++v) t.push_back({v, static_cast<Index>(r), attr(uniform_index(rng, A))});
  }

  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < toy.num_users; ++u) {
    std::vector<Index> clusters(C);
    std::iota(clusters.begin(), clusters.end(), 0);
    shuffle(clusters, rng);
    clusters.resize(toy.prefs_per_user);
    std::vector<Index> pool;
    for (Index c : clusters) pool.insert(pool.end(), members[c].begin(), members[c].end());
    const std::size_t n = toy.min_interactions +
                          uniform_index(rng, toy.max_interactions - toy.min_interactions + 1);
    std::vector<char> taken(I, 0);
    std::size_t got = 0, guard = 0;
    while (got < n && guard++ < 100 * n) {
      const Index v = uniform_open01(rng) < toy.noise_interactions ? static_cast<Index>(uniform_index(rng, I))
                                                                    : pool[uniform_index(rng, pool.size())];
      if (taken[v]) continue;
      taken[v] = 1;
      edges.emplace_back(u, v);
      ++got;
    }
  }

  Dataset d;
  d.name = "toy";
  InteractionGraph all = InteractionGraph::from_edges(toy.num_users, I, std::move(edges));
  Split s = split_user_stratified(all, seed);
  d.train = std::move(s.train);
  d.valid = std::move(s.valid);
  d.test = std::move(s.test);
  d.kg = KnowledgeGraph::from_triplets(toy.num_entities, R, std::move(t), add_inverse);
  const char* names[] = {"in_cluster", "tagged_with", "linked_to", "cluster_feature", "made_by"};
  for (std::size_t r = 0; r < R; ++r) {
    d.relation_names.push_back(r < 5 ? names[r] : "noise_" + std::to_string(r));
  }
  d.item_category.assign(cluster_of.begin(), cluster_of.end());
  for (std::size_t c = 0; c < C; ++c) d.category_names.push_back("cluster_" + std::to_string(c));
  d.planted_relation = 0;
  return d;
}

Dataset resolve_dataset(const std::string& spec, const TrainConfig& cfg) {
  if (spec == "toy") return make_toy_dataset(cfg.toy, cfg.seed, cfg.inverse_relations);
  return load_dataset(spec, cfg.inverse_relations, cfg.seed);
}

}  // namespace kgrec
