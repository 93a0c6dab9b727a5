#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "kgrec/graphstore.h"
#include "kgrec/rng.h"
#include "kgrec/selfcheck.h"
#include "support.h"

using namespace kgrec;

namespace {

// Repeatedly scans the edge list and deletes every edge touching a node below k.
std::set<std::pair<Index, Index>> brute_force_core(std::vector<std::pair<Index, Index>> edges, std::size_t k) {
  std::set<std::pair<Index, Index>> cur(edges.begin(), edges.end());
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<Index, std::size_t> du, dv;
    for (auto [u, v] : cur) {
      ++du[u];
      ++dv[v];
    }
    for (auto it = cur.begin(); it != cur.end();) {
      if (du[it->first] < k || dv[it->second] < k) {
        it = cur.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  return cur;
}

}  // namespace

TEST_SUITE("graphstore") {
  TEST_CASE("adjacency-list interactions") {
    testing::TempDir dir;
    InteractionLoadStats stats;
    const auto g = load_interactions(dir.write("train.txt", "0 1 2\n1 2\n"), {}, &stats);
    CHECK(g.num_users() == 2);
    CHECK(g.num_items() == 3);
    CHECK(g.edges() == std::vector<std::pair<Index, Index>>{{0, 1}, {0, 2}, {1, 2}});
    CHECK(g.has_edge(1, 2));
    CHECK_FALSE(g.has_edge(1, 1));
    CHECK(stats.edges == 3);
  }

  TEST_CASE("empty interaction file") {
    testing::TempDir dir;
    const auto g = load_interactions(dir.write("empty.txt", ""));
    CHECK(g.num_edges() == 0);
  }

  TEST_CASE("duplicates, blank lines and item-less users") {
    testing::TempDir dir;
    InteractionLoadStats stats;
    const auto g = load_interactions(dir.write("t.txt", "0 1 1 2\n\n3\n2 0\n"), {}, &stats);
    CHECK(g.num_edges() == 3);
    CHECK(stats.duplicates == 1);
    CHECK(stats.users_without_items == 1);
    CHECK(g.num_users() == 4);
  }

  TEST_CASE("malformed interaction line names file and line") {
    testing::TempDir dir;
    const auto p = dir.write("bad.txt", "0 1\n1 x\n");
    try {
      load_interactions(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("bad.txt") != std::string::npos);
    }
  }

  TEST_CASE("ids beyond declared counts are rejected") {
    testing::TempDir dir;
    const auto p = dir.write("t.txt", "0 5\n");
    CHECK_THROWS_AS(load_interactions(p, GraphCounts{1, 3}), ValidationError);
  }

  TEST_CASE("single triplet with and without inverse") {
    testing::TempDir dir;
    const auto p = dir.write("kg.txt", "0 0 5\n");
    const auto plain = load_kg(p, false);
    CHECK(plain.num_triplets() == 1);
    REQUIRE(plain.neighbors(0).size() == 1);
    CHECK(plain.neighbors(0)[0].relation == 0);
    CHECK(plain.neighbors(0)[0].tail == 5);

    const auto inv = load_kg(p, true);
    CHECK(inv.num_triplets() == 2);
    REQUIRE(inv.neighbors(5).size() == 1);
    CHECK(inv.neighbors(5)[0].relation == 1);
    CHECK(inv.neighbors(5)[0].tail == 0);
  }

  TEST_CASE("neighbor slices") {
    testing::TempDir dir;
    const auto kg = load_kg(dir.write("kg.txt", "0 0 5\n0 1 6\n"), false);
    CHECK(neighbors_kg(kg, 0).size() == 2);
    CHECK(neighbors_kg(kg, 3).empty());
    CHECK_THROWS_AS(neighbors_kg(kg, 7), ContractViolation);
  }

  TEST_CASE("kg lines need exactly three ids") {
    testing::TempDir dir;
    CHECK_THROWS_AS(load_kg(dir.write("a.txt", "0 1\n"), false), ParseError);
    CHECK_THROWS_AS(load_kg(dir.write("b.txt", "0 1 2 3\n"), false), ParseError);
  }

  TEST_CASE("kg load stats count duplicates and self-loops") {
    testing::TempDir dir;
    KgLoadStats s;
    load_kg(dir.write("kg.txt", "0 0 1\n0 0 1\n2 1 2\n"), true, {}, &s);
    CHECK(s.triplets == 2);
    CHECK(s.duplicates == 1);
    CHECK(s.self_loops == 1);
    CHECK(format_stats(s).find("duplicates=1") != std::string::npos);
  }

  TEST_CASE("star graph has no 10-core") {
    std::vector<std::pair<Index, Index>> e;
    for (Index v = 0; v < 10; ++v) e.emplace_back(0, v);
    CHECK_THROWS_AS(ten_core_filter(InteractionGraph::from_edges(1, 10, e), 10), EmptyGraphError);
  }

  TEST_CASE("complete 10x10 bipartite graph is its own 10-core") {
    std::vector<std::pair<Index, Index>> e;
    for (Index u = 0; u < 10; ++u) {
      for (Index v = 0; v < 10; ++v) e.emplace_back(u, v);
    }
    const auto g = InteractionGraph::from_edges(10, 10, e);
    const auto r = ten_core_filter(g, 10);
    CHECK(r.graph.edges() == g.edges());
    for (Index i = 0; i < 10; ++i) {
      CHECK(r.user_map[i] == i);
      CHECK(r.item_map[i] == i);
    }
  }

  TEST_CASE("k-core matches brute-force deletion and is idempotent") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {1});
      const std::size_t k = 2 + uniform_index(rng, 4);
      const auto g = random_interactions(50, 50, 0.05 + 0.15 * uniform_open01(rng), rng);
      const auto oracle = brute_force_core(g.edges(), k);
      if (oracle.empty()) {
        CHECK_THROWS_AS(ten_core_filter(g, k), EmptyGraphError);
        continue;
      }
      const auto r = ten_core_filter(g, k);
      std::set<std::pair<Index, Index>> back;
      std::vector<Index> inv_u(r.graph.num_users()), inv_v(r.graph.num_items());
      for (Index u = 0; u < r.user_map.size(); ++u) {
        if (r.user_map[u] >= 0) inv_u[r.user_map[u]] = u;
      }
      for (Index v = 0; v < r.item_map.size(); ++v) {
        if (r.item_map[v] >= 0) inv_v[r.item_map[v]] = v;
      }
      for (auto [u, v] : r.graph.edges()) back.emplace(inv_u[u], inv_v[v]);
      CHECK(back == oracle);
      CHECK(ten_core_filter(r.graph, k).graph.edges() == r.graph.edges());
    }
  }

  TEST_CASE("csr round trip and inverse symmetry") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {2});
      const std::size_t ne = 1 + uniform_index(rng, 40);
      const auto kg = random_kg(ne, 1 + uniform_index(rng, 5), uniform_index(rng, 120), true, rng);
      REQUIRE(kg.num_triplets() % 2 == 0);
      std::multiset<Triplet> from_csr, stored(kg.triplets().begin(), kg.triplets().end());
      std::vector<int> seen(kg.num_triplets(), 0);
      for (Index h = 0; h < ne; ++h) {
        for (const auto& n : neighbors_kg(kg, h)) {
          from_csr.insert({h, n.relation, n.tail});
          ++seen[n.id];
          CHECK(kg.triplet(n.id) == Triplet{h, n.relation, n.tail});
        }
      }
      CHECK(from_csr == stored);
      CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
      const std::size_t half = kg.num_triplets() / 2;
      const Index R = static_cast<Index>(kg.num_base_relations());
      for (std::size_t i = 0; i < half; ++i) {
        const Triplet t = kg.triplet(i);
        CHECK(kg.triplet(i + half) == Triplet{t.tail, t.relation + R, t.head});
        CHECK(std::count(kg.triplets().begin(), kg.triplets().end(), Triplet{t.tail, t.relation + R, t.head}) == 1);
      }

      const auto ui = random_interactions(1 + uniform_index(rng, 20), 1 + uniform_index(rng, 20), 0.3, rng);
      std::multiset<std::pair<Index, Index>> by_user, by_item;
      for (Index u = 0; u < ui.num_users(); ++u) {
        for (Index v : ui.items_of(u)) by_user.emplace(u, v);
      }
      for (Index v = 0; v < ui.num_items(); ++v) {
        const auto users = ui.users_of(v);
        const auto ids = ui.item_edge_ids(v);
        for (std::size_t i = 0; i < users.size(); ++i) {
          by_item.emplace(users[i], v);
          CHECK(ui.edges()[ids[i]] == std::pair<Index, Index>{users[i], v});
        }
      }
      CHECK(by_user == by_item);
      CHECK(by_user.size() == ui.num_edges());
    }
  }

  TEST_CASE("items are the entity prefix") {
    Rng rng(3);
    const auto kg = random_kg(20, 2, 30, false, rng);
    for (Index v = 0; v < 10; ++v) CHECK(kg.item_to_entity(v) == v);
  }

  TEST_CASE("compaction remaps kg items to the new item prefix") {
    std::vector<std::pair<Index, Index>> e;
    for (Index u = 0; u < 3; ++u) {
      for (Index v = 1; v < 4; ++v) e.emplace_back(u, v);
    }
    const auto core = ten_core_filter(InteractionGraph::from_edges(3, 4, e), 3);
    CHECK(core.item_map[0] == -1);
    const auto kg = KnowledgeGraph::from_triplets(6, 1, {{0, 0, 4}, {3, 0, 5}}, false);
    const auto re = remap_kg_items(kg, core.item_map, 4);
    CHECK(re.num_triplets() == 2);
    CHECK(re.num_entities() == 6);
    // Item 3 becomes item 2; the removed item 0 is renumbered after the surviving items.
    bool found = false;
    for (const auto& t : re.triplets()) found = found || (t.head == 2 && t.relation == 0);
    CHECK(found);
  }
}
