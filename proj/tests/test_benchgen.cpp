#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "miaforge/benchgen.hpp"
#include "miaforge/error.hpp"
#include "miaforge/synth.hpp"
#include "support/fixtures.hpp"

using namespace miaforge;

namespace {

EmbeddingSet rows(const std::vector<std::vector<double>>& v, const std::string& prefix = "e") {
  EmbeddingSet s;
  s.vectors = Matrix(v.size(), v.front().size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    s.ids.push_back(prefix + std::to_string(i));
    for (std::size_t j = 0; j < v[i].size(); ++j) s.vectors(i, j) = v[i][j];
  }
  return s;
}

double cosine_dist(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - ab / std::sqrt(aa * bb);
}

EmbeddingSet gaussian(std::mt19937_64& rng, std::size_t n, std::size_t d, const std::string& prefix) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> v(n, std::vector<double>(d));
  for (auto& r : v) {
    for (auto& x : r) x = g(rng);
  }
  return rows(v, prefix);
}

BlobPools small_blobs(std::uint64_t seed = 0) {
  BlobConfig c;
  c.clusters = 3;
  c.points_per_side = 240;
  c.dim = 24;
  c.seed = seed;
  return generate_blobs(c);
}

BenchgenConfig small_config() {
  BenchgenConfig c;
  c.k = 3;
  c.min_dist = 0.0;
  c.size_per_side = 30;
  return c;
}

}  // namespace

TEST_CASE("kmeans examples") {
  SUBCASE("k = N puts every point alone") {
    const auto e = rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}});
    const auto c = kmeans(e, 4, 0);
    CHECK(c.inertia == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::set<std::size_t>(c.assignments.begin(), c.assignments.end()).size() == 4);
  }
  SUBCASE("k = 1 gives the normalized mean direction") {
    const auto e = rows({{1, 0}, {0, 1}, {1, 1}});
    const auto c = kmeans(e, 1, 0);
    const double s = 1 + 0 + 1 / std::sqrt(2.0);
    const double norm = std::sqrt(2 * s * s);
    CHECK(c.centroids(0, 0) == doctest::Approx(s / norm));
    CHECK(c.centroids(0, 1) == doctest::Approx(s / norm));
  }
  SUBCASE("two tight blobs are recovered exactly") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0, 0.01);
    std::vector<std::vector<double>> v;
    for (int i = 0; i < 40; ++i) v.push_back({i % 2 ? 1 + g(rng) : g(rng), i % 2 ? g(rng) : 1 + g(rng), g(rng)});
    const auto c = kmeans(rows(v), 2, 5);
    for (int i = 2; i < 40; ++i) CHECK((c.assignments[i] == c.assignments[i % 2]));
    CHECK(c.assignments[0] != c.assignments[1]);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(kmeans(rows({{1, 0}}), 2, 0), ValidationError);
    CHECK_THROWS_AS(kmeans(rows({{1, 0}, {0, 0}}), 1, 0), ValidationError);
  }
}

TEST_CASE("property: kmeans objective never increases and clusters are non-empty") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 15; ++trial) {
    const auto e = gaussian(rng, 60 + rng() % 100, 2 + rng() % 6, "x");
    const std::size_t k = 2 + rng() % 8;
    const auto c = kmeans(e, k, trial);
    for (std::size_t i = 1; i < c.objective_history.size(); ++i) {
      CHECK(c.objective_history[i] <= c.objective_history[i - 1] + 1e-9);
    }
    for (std::size_t j = 0; j < k; ++j) {
      CHECK_FALSE(c.members(j).empty());
      double norm = 0;
      for (double x : c.centroids.row(j)) norm += x * x;
      CHECK(norm == doctest::Approx(1.0));
    }
    CHECK(c.inertia >= 0);
    const auto again = kmeans(e, k, trial);
    CHECK(again.assignments == c.assignments);
  }
}

TEST_CASE("dedup_greedy examples") {
  const auto dup = rows({{1, 0}, {1, 0}});
  const std::vector<std::size_t> two{0, 1};
  CHECK(dedup_greedy(two, dup) == std::vector<std::size_t>{0});
  const auto ortho = rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const std::vector<std::size_t> three{0, 1, 2};
  CHECK(dedup_greedy(three, ortho) == three);
  // A-B and B-C at 45 degrees (distance 0.29), A-C orthogonal
  const auto chain = rows({{1, 0}, {1, 1}, {0, 1}});
  CHECK(dedup_greedy(three, chain) == std::vector<std::size_t>{0, 2});
  const std::vector<std::string> ids{"e0", "e1", "e2"};
  CHECK(dedup_greedy(ids, chain) == std::vector<std::string>{"e0", "e2"});
}

TEST_CASE("property: dedup keeps a maximal set of far-apart points") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto e = gaussian(rng, 100 + rng() % 300, 3, "p");
    std::vector<std::size_t> all(e.size());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    const double min_dist = 0.1 + 0.1 * static_cast<double>(trial % 6);
    const auto kept = dedup_greedy(all, e, min_dist);
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        CHECK(cosine_dist(e.vectors.row(kept[a]), e.vectors.row(kept[b])) >= min_dist);
      }
    }
    const std::set<std::size_t> kept_set(kept.begin(), kept.end());
    for (auto r : all) {
      if (kept_set.count(r)) continue;
      const bool blocked = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
        return cosine_dist(e.vectors.row(k), e.vectors.row(r)) < min_dist;
      });
      CHECK(blocked);
    }
  }
}

TEST_CASE("pick_cluster_pair matches an exhaustive distance table") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = kmeans(gaussian(rng, 80, 5, "m"), 2 + rng() % 5, trial);
    const auto n = kmeans(gaussian(rng, 80, 5, "n"), 2 + rng() % 5, trial + 100);
    std::vector<std::tuple<double, std::size_t, std::size_t>> table;
    for (std::size_t i = 0; i < m.k(); ++i) {
      for (std::size_t j = 0; j < n.k(); ++j) table.emplace_back(cosine_dist(m.centroids.row(i), n.centroids.row(j)), i, j);
    }
    auto sorted = table;
    std::sort(sorted.begin(), sorted.end());
    const auto far = std::max_element(table.begin(), table.end(),
                                      [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    const auto f = pick_cluster_pair(m, n, PairMode::farthest);
    CHECK(f.member_cluster == std::get<1>(*far));
    CHECK(f.non_member_cluster == std::get<2>(*far));
    const auto c = pick_cluster_pair(m, n, PairMode::closest);
    CHECK(c.member_cluster == std::get<1>(sorted.front()));
    CHECK(c.non_member_cluster == std::get<2>(sorted.front()));
    const auto med = pick_cluster_pair(m, n, PairMode::median);
    CHECK(med.distance == doctest::Approx(std::get<0>(sorted[(sorted.size() - 1) / 2])));
    CHECK(f.distance >= med.distance);
    CHECK(med.distance >= c.distance);
  }
}

TEST_CASE("pick_cluster_pair edge cases") {
  const auto one_m = kmeans(rows({{1, 0}, {1, 0.1}}), 1, 0);
  const auto one_n = kmeans(rows({{0, 1}}), 1, 0);
  for (auto mode : {PairMode::farthest, PairMode::closest, PairMode::median}) {
    const auto p = pick_cluster_pair(one_m, one_n, mode);
    CHECK(p.member_cluster == 0);
    CHECK(p.non_member_cluster == 0);
  }
  // every pair at the same distance: lowest index wins
  Clustering m, n;
  m.centroids = Matrix(2, 2);
  m.centroids(0, 0) = 1;
  m.centroids(1, 0) = 1;
  n.centroids = Matrix(2, 2);
  n.centroids(0, 1) = 1;
  n.centroids(1, 1) = 1;
  for (auto mode : {PairMode::farthest, PairMode::closest, PairMode::median}) {
    const auto p = pick_cluster_pair(m, n, mode);
    CHECK(p.member_cluster == 0);
    CHECK(p.non_member_cluster == 0);
  }
}

TEST_CASE("difficulty names round-trip") {
  for (auto d : {Difficulty::easy, Difficulty::medium, Difficulty::hard, Difficulty::random, Difficulty::mix1,
                 Difficulty::mix2}) {
    CHECK(parse_difficulty(to_string(d)) == d);
  }
  CHECK_THROWS_AS(parse_difficulty("extreme"), ValidationError);
}

TEST_CASE("Easy and Hard take the extreme instances by brute force") {
  const auto blobs = small_blobs();
  const auto cfg = small_config();
  const auto pools = prepare_pools(blobs.members, blobs.non_members, cfg);
  for (auto d : {Difficulty::easy, Difficulty::hard}) {
    const auto split = assemble_split(pools, d, cfg);
    REQUIRE(split.pair.has_value());
    const auto centroid = pools.non_member_clusters.centroids.row(split.pair->non_member_cluster);
    std::vector<std::pair<double, std::string>> cand;
    for (auto r : pools.member_kept[split.pair->member_cluster]) {
      cand.emplace_back(cosine_dist(pools.members.vectors.row(r), centroid), pools.members.ids[r]);
    }
    std::sort(cand.begin(), cand.end());
    if (d == Difficulty::easy) std::reverse(cand.begin(), cand.end());
    std::set<std::string> expect;
    for (std::size_t i = 0; i < cfg.size_per_side; ++i) expect.insert(cand[i].second);
    CHECK(std::set<std::string>(split.members.begin(), split.members.end()) == expect);
  }
}

TEST_CASE("split invariants") {
  const auto blobs = small_blobs(3);
  auto cfg = small_config();
  const auto pools = prepare_pools(blobs.members, blobs.non_members, cfg);
  const auto random = assemble_split(pools, Difficulty::random, cfg);
  const auto hard = assemble_split(pools, Difficulty::hard, cfg);
  const auto mix1 = assemble_split(pools, Difficulty::mix1, cfg);
  const auto mix2 = assemble_split(pools, Difficulty::mix2, cfg);
  CHECK(mix1.members == random.members);
  CHECK(mix1.non_members == hard.non_members);
  CHECK(mix2.members == hard.members);
  CHECK(mix2.non_members == random.non_members);
  for (auto d : {Difficulty::easy, Difficulty::medium, Difficulty::hard, Difficulty::random, Difficulty::mix1,
                 Difficulty::mix2}) {
    const auto s = assemble_split(pools, d, cfg);
    CHECK(s.members.size() == cfg.size_per_side);
    CHECK(s.non_members.size() == cfg.size_per_side);
    CHECK(std::set<std::string>(s.members.begin(), s.members.end()).size() == cfg.size_per_side);
  }
  const auto easy = assemble_split(pools, Difficulty::easy, cfg);
  const auto medium = assemble_split(pools, Difficulty::medium, cfg);
  CHECK(easy.pair->distance >= medium.pair->distance);
  CHECK(medium.pair->distance >= hard.pair->distance);

  SUBCASE("whole cluster when the size equals the kept count") {
    const auto full = pools.member_kept[easy.pair->member_cluster].size();
    const auto nm_full = pools.non_member_kept[easy.pair->non_member_cluster].size();
    cfg.size_per_side = std::min(full, nm_full);
    if (full == cfg.size_per_side) {
      const auto s = assemble_split(pools, Difficulty::easy, cfg);
      std::set<std::string> expect;
      for (auto r : pools.member_kept[easy.pair->member_cluster]) expect.insert(pools.members.ids[r]);
      CHECK(std::set<std::string>(s.members.begin(), s.members.end()) == expect);
    }
  }
  SUBCASE("shortfall names the counts") {
    cfg.size_per_side = 1000;
    CHECK_THROWS_WITH_AS(assemble_split(pools, Difficulty::easy, cfg), doctest::Contains("1000 required"),
                         ValidationError);
  }
}

TEST_CASE("property: Easy >= Medium >= Hard pair distance on random pools") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 8; ++trial) {
    BenchgenConfig cfg;
    cfg.k = 2 + rng() % 5;
    cfg.min_dist = 0.0;
    cfg.size_per_side = 1;
    cfg.seed = trial;
    const auto pools = prepare_pools(gaussian(rng, 60, 4, "m"), gaussian(rng, 60, 4, "n"), cfg);
    const auto e = assemble_split(pools, Difficulty::easy, cfg).pair->distance;
    const auto m = assemble_split(pools, Difficulty::medium, cfg).pair->distance;
    const auto h = assemble_split(pools, Difficulty::hard, cfg).pair->distance;
    CHECK(e >= m);
    CHECK(m >= h);
  }
}

TEST_CASE("embedding files round-trip") {
  fixture::TempDir dir;
  std::mt19937_64 rng(2);
  auto e = gaussian(rng, 7, 5, "doc");
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 5; ++j) e.vectors(i, j) = static_cast<float>(e.vectors(i, j));
  }
  save_embeddings(e, dir.path());
  const auto b = load_embeddings(dir.path());
  CHECK(b.ids == e.ids);
  CHECK(b.vectors == e.vectors);
  CHECK(fixture::slurp(dir / "emb.f32").size() == 7 * 5 * 4);
  fixture::spit(dir / "emb.f32", fixture::slurp(dir / "emb.f32").substr(4));
  CHECK_THROWS_AS(load_embeddings(dir.path()), ValidationError);
}

TEST_CASE("write_split output format and determinism") {
  const auto blobs = small_blobs(5);
  const auto cfg = small_config();
  const auto pools = prepare_pools(blobs.members, blobs.non_members, cfg);
  fixture::TempDir one, two;
  write_split(assemble_split(pools, Difficulty::medium, cfg), pools, cfg, one.path());
  const auto again = prepare_pools(blobs.members, blobs.non_members, cfg);
  write_split(assemble_split(again, Difficulty::medium, cfg), again, cfg, two.path());
  CHECK(fixture::slurp(one / "split.jsonl") == fixture::slurp(two / "split.jsonl"));
  CHECK(fixture::slurp(one / "provenance.json") == fixture::slurp(two / "provenance.json"));

  std::istringstream in(fixture::slurp(one / "split.jsonl"));
  std::string line;
  std::size_t members = 0, total = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.size() == 4);
    CHECK(j["difficulty"] == "medium");
    CHECK(j["length_bucket"] == 128);
    const int label = j["label"];
    if (total < cfg.size_per_side) CHECK(label == 1);
    members += label;
    ++total;
  }
  CHECK(members == cfg.size_per_side);
  CHECK(total == 2 * cfg.size_per_side);
}
