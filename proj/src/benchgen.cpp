#include "miaforge/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "io_util.hpp"
#include "miaforge/error.hpp"
#include "miaforge/parallel.hpp"

namespace miaforge {

namespace fs = std::filesystem;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Cosine distance between unit vectors, clamped to [0, 2].
double unit_distance(std::span<const double> a, std::span<const double> b) {
  return std::clamp(1.0 - dot(a, b), 0.0, 2.0);
}

void normalize_row(std::span<double> row) {
  const double norm = std::sqrt(dot(row, row));
  if (norm > 0.0) {
    for (auto& v : row) v /= norm;
  }
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

/// Sum of cosine distances; returns whether any assignment changed.
bool assign_points(const Matrix& x, const Matrix& centroids, std::vector<std::size_t>& assignments,
                   std::vector<double>& distances) {
  const auto n = x.rows();
  std::vector<char> changed(n, 0);
  parallel_for(n, [&](std::size_t i) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double sim = dot(x.row(i), centroids.row(c));
      if (sim > best_sim) {
        best_sim = sim;
        best = c;
      }
    }
    if (assignments[i] != best) changed[i] = 1;
    assignments[i] = best;
    distances[i] = std::clamp(1.0 - best_sim, 0.0, 2.0);
  });
  return std::any_of(changed.begin(), changed.end(), [](char c) { return c != 0; });
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

/// Normalized mean of each cluster; empty clusters take the point farthest
/// from its own centroid (from a cluster with more than one member).
void update_centroids(const Matrix& x, Matrix& centroids, std::vector<std::size_t>& assignments,
                      std::vector<double>& distances) {
  const auto k = centroids.rows();
  const auto d = x.cols();
  Matrix sums(k, d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = sums.row(assignments[i]);
    const auto xi = x.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] += xi[j];
    ++counts[assignments[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    auto row = sums.row(c);
    if (dot(row, row) == 0.0) continue;  // antipodal members; keep old centroid
    normalize_row(row);
    std::copy(row.begin(), row.end(), centroids.row(c).begin());
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = x.rows();
    double far_dist = -1.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (counts[assignments[i]] > 1 && distances[i] > far_dist) {
        far_dist = distances[i];
        far = i;
      }
    }
    if (far == x.rows()) break;
    --counts[assignments[far]];
    assignments[far] = c;
    counts[c] = 1;
    distances[far] = 0.0;
    std::copy(x.row(far).begin(), x.row(far).end(), centroids.row(c).begin());
  }
}

std::vector<std::size_t> sample_rows(std::vector<std::size_t> pool, std::size_t count,
                                     std::mt19937_64 rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

EmbeddingSet load_embeddings(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw ValidationError("missing embedding manifest " + manifest_path.string());
  }
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::parse_error&) {
    throw ValidationError("malformed embedding manifest " + manifest_path.string());
  }
  if (m.value("dtype", "") != "f32") throw ValidationError("embedding dtype must be \"f32\"");
  if (!m.contains("n") || !m.contains("d") || !m.contains("ids") || !m["ids"].is_array()) {
    throw ValidationError("embedding manifest needs n, d and ids");
  }
  const auto n = m["n"].get<std::size_t>();
  const auto d = m["d"].get<std::size_t>();
  EmbeddingSet set;
  set.ids = m["ids"].get<std::vector<std::string>>();
  set.normalized = m.value("normalized", false);
  if (set.ids.size() != n) {
    throw ValidationError("embedding manifest lists " + std::to_string(set.ids.size()) +
                          " ids but n = " + std::to_string(n));
  }
  if (d == 0) throw ValidationError("embedding dimension must be positive");
  const auto bytes = detail::read_file(dir / "emb.f32");
  if (bytes.size() != n * d * 4) {
    throw ValidationError("emb.f32 holds " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(n * d * 4));
  }
  const auto floats = detail::decode_le<float>(bytes);
  std::vector<double> data(floats.begin(), floats.end());
  set.vectors = Matrix(n, d, std::move(data));
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : set.vectors.row(i)) {
      if (!std::isfinite(v)) throw ValidationError("embedding of '" + set.ids[i] + "' is not finite");
    }
  }
  return set;
}

void save_embeddings(const EmbeddingSet& set, const fs::path& dir) {
  detail::ensure_directory(dir);
  const auto& data = set.vectors.data();
  std::vector<float> floats(data.begin(), data.end());
  detail::write_file(dir / "emb.f32", detail::encode_le(floats));
  nlohmann::ordered_json m;
  m["n"] = set.size();
  m["d"] = set.dim();
  m["dtype"] = "f32";
  m["normalized"] = set.normalized;
  m["ids"] = set.ids;
  detail::write_file(dir / "manifest.json", m.dump(2) + "\n");
}

EmbeddingSet normalized(EmbeddingSet set) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto row = set.vectors.row(i);
    const double sq = dot(row, row);
    if (!std::isfinite(sq)) throw ValidationError("embedding of '" + set.ids[i] + "' is not finite");
    if (sq == 0.0) throw ValidationError("embedding of '" + set.ids[i] + "' is a zero vector");
    normalize_row(row);
  }
  set.normalized = true;
  return set;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine distance of a zero vector");
  return std::clamp(1.0 - dot(a, b) / (na * nb), 0.0, 2.0);
}

std::vector<std::size_t> Clustering::members(std::size_t c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == c) out.push_back(i);
  }
  return out;
}

Clustering kmeans(const EmbeddingSet& embeddings, std::size_t k, std::uint64_t seed,
                  std::size_t max_iters) {
  const auto n = embeddings.size();
  if (k == 0) throw ValidationError("k must be positive");
  if (k > n) {
    throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                          " points to cluster");
  }
  const auto unit = embeddings.normalized ? embeddings : normalized(embeddings);
  const auto& x = unit.vectors;
  const auto d = x.cols();

  // k-means++ seeding on cosine distance
  auto rng = stream(seed, 0x6b6d);
  Matrix centroids(k, d);
  std::vector<char> chosen(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      double weight_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) weight_sum += chosen[i] ? 0.0 : nearest[i] * nearest[i];
      if (weight_sum > 0.0) {
        double target = std::uniform_real_distribution<double>(0.0, weight_sum)(rng);
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i]) continue;
          const double w = nearest[i] * nearest[i];
          if (w > 0.0) {
            pick = i;
            if (target < w) break;
            target -= w;
          }
        }
      } else {
        // every remaining point duplicates a centroid; take any unchosen one
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < n; ++i) {
          if (!chosen[i]) rest.push_back(i);
        }
        pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
      }
    }
    chosen[pick] = 1;
    std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], unit_distance(x.row(i), centroids.row(c)));
    }
  }

  Clustering out;
  out.assignments.assign(n, k);  // k = unassigned sentinel
  std::vector<double> distances(n, 0.0);
  assign_points(x, centroids, out.assignments, distances);
  out.objective_history.push_back(total(distances));
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    update_centroids(x, centroids, out.assignments, distances);
    const bool changed = assign_points(x, centroids, out.assignments, distances);
    out.objective_history.push_back(total(distances));
    ++out.iterations;
    if (!changed) break;
  }

  // Leave no cluster empty, then make every centroid the normalized mean of
  // its final members.
  update_centroids(x, centroids, out.assignments, distances);
  for (std::size_t i = 0; i < n; ++i) {
    distances[i] = unit_distance(x.row(i), centroids.row(out.assignments[i]));
  }
  out.centroids = std::move(centroids);
  out.inertia = total(distances);
  return out;
}

std::vector<std::size_t> dedup_greedy(std::span<const std::size_t> rows,
                                      const EmbeddingSet& embeddings, double min_dist) {
  const auto unit = embeddings.normalized ? embeddings : normalized(embeddings);
  std::vector<std::size_t> kept;
  for (auto r : rows) {
    if (r >= unit.size()) throw ValidationError("dedup row index out of range");
    bool keep = true;
    for (auto k : kept) {
      if (unit_distance(unit.vectors.row(r), unit.vectors.row(k)) < min_dist) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(r);
  }
  return kept;
}

std::vector<std::string> dedup_greedy(std::span<const std::string> ids,
                                      const EmbeddingSet& embeddings, double min_dist) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < embeddings.size(); ++i) index.emplace(embeddings.ids[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("unknown embedding id '" + id + "'");
    rows.push_back(it->second);
  }
  std::vector<std::string> out;
  for (auto r : dedup_greedy(rows, embeddings, min_dist)) out.push_back(embeddings.ids[r]);
  return out;
}

ClusterPair pick_cluster_pair(const Clustering& members, const Clustering& non_members,
                              PairMode mode) {
  std::vector<ClusterPair> pairs;
  pairs.reserve(members.k() * non_members.k());
  for (std::size_t m = 0; m < members.k(); ++m) {
    for (std::size_t nm = 0; nm < non_members.k(); ++nm) {
      pairs.push_back({m, nm, cosine_distance(members.centroids.row(m),
                                              non_members.centroids.row(nm))});
    }
  }
  if (pairs.empty()) throw ValidationError("cluster pair selection needs non-empty clusterings");
  // pairs are generated in lexicographic index order, so stable sorting by
  // distance breaks ties toward the lowest index pair
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const ClusterPair& a, const ClusterPair& b) { return a.distance < b.distance; });
  const auto first_at = [&](double d) {
    return *std::find_if(pairs.begin(), pairs.end(), [&](const ClusterPair& p) { return p.distance == d; });
  };
  switch (mode) {
    case PairMode::closest:
      return pairs.front();
    case PairMode::median:
      return first_at(pairs[(pairs.size() - 1) / 2].distance);
    case PairMode::farthest:
      return first_at(pairs.back().distance);
  }
  return pairs.front();
}

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy:
      return "easy";
    case Difficulty::medium:
      return "medium";
    case Difficulty::hard:
      return "hard";
    case Difficulty::random:
      return "random";
    case Difficulty::mix1:
      return "mix1";
    case Difficulty::mix2:
      return "mix2";
  }
  return "unknown";
}

Difficulty parse_difficulty(const std::string& name) {
  for (auto d : {Difficulty::easy, Difficulty::medium, Difficulty::hard, Difficulty::random,
                 Difficulty::mix1, Difficulty::mix2}) {
    if (to_string(d) == name) return d;
  }
  throw ValidationError("unknown difficulty '" + name + "'");
}

PreparedPools prepare_pools(EmbeddingSet members, EmbeddingSet non_members,
                            const BenchgenConfig& config) {
  PreparedPools out;
  out.members = normalized(std::move(members));
  out.non_members = normalized(std::move(non_members));
  if (out.members.dim() != out.non_members.dim()) {
    throw ValidationError("member and non-member embeddings differ in dimension");
  }
  out.member_clusters = kmeans(out.members, config.k, config.seed, config.max_iters);
  out.non_member_clusters = kmeans(out.non_members, config.k, config.seed + 1, config.max_iters);
  for (std::size_t c = 0; c < out.member_clusters.k(); ++c) {
    out.member_kept.push_back(dedup_greedy(out.member_clusters.members(c), out.members, config.min_dist));
  }
  for (std::size_t c = 0; c < out.non_member_clusters.k(); ++c) {
    out.non_member_kept.push_back(
        dedup_greedy(out.non_member_clusters.members(c), out.non_members, config.min_dist));
  }
  return out;
}

namespace {

struct SideSelection {
  std::vector<std::size_t> rows;
  SideProvenance provenance;
};

void require(std::size_t available, std::size_t wanted, const std::string& what) {
  if (available < wanted) {
    throw ValidationError("shortfall: " + what + " has " + std::to_string(available) +
                          " points after dedup, " + std::to_string(wanted) + " required");
  }
}

SideSelection random_side(const std::vector<std::vector<std::size_t>>& kept, std::size_t size,
                          std::mt19937_64 rng, const std::string& side) {
  std::vector<std::size_t> pool;
  for (const auto& c : kept) pool.insert(pool.end(), c.begin(), c.end());
  std::sort(pool.begin(), pool.end());
  require(pool.size(), size, side + " pool");
  SideSelection s;
  s.provenance.source = "random";
  s.provenance.available = pool.size();
  s.rows = sample_rows(std::move(pool), size, std::move(rng));
  return s;
}

SideSelection cluster_side(const EmbeddingSet& own, const std::vector<std::size_t>& kept,
                           std::size_t cluster, const EmbeddingSet& opposite,
                           const Clustering& opposite_clusters,
                           const std::vector<std::size_t>& opposite_kept, std::size_t opposite_cluster,
                           Difficulty difficulty, const BenchgenConfig& config, std::mt19937_64 rng,
                           const std::string& side) {
  require(kept.size(), config.size_per_side, side + " cluster " + std::to_string(cluster));
  SideSelection s;
  s.provenance.cluster = cluster;
  s.provenance.available = kept.size();

  std::vector<double> dist(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto row = own.vectors.row(kept[i]);
    if (config.opposite == OppositeDistance::centroid) {
      dist[i] = unit_distance(row, opposite_clusters.centroids.row(opposite_cluster));
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (auto o : opposite_kept) best = std::min(best, unit_distance(row, opposite.vectors.row(o)));
      dist[i] = best;
    }
  }

  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  if (difficulty == Difficulty::medium) {
    s.provenance.source = "cluster-sample";
    order = sample_rows(std::move(order), config.size_per_side, std::move(rng));
  } else {
    const bool far = difficulty == Difficulty::easy;
    s.provenance.source = far ? "farthest" : "closest";
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return far ? dist[a] > dist[b] : dist[a] < dist[b];
    });
    order.resize(config.size_per_side);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto i : order) {
    s.rows.push_back(kept[i]);
    lo = std::min(lo, dist[i]);
    hi = std::max(hi, dist[i]);
  }
  s.provenance.min_distance = lo;
  s.provenance.max_distance = hi;
  return s;
}

}  // namespace

BenchmarkSplit assemble_split(const PreparedPools& pools, Difficulty difficulty,
                              const BenchgenConfig& config) {
  if (config.size_per_side == 0) throw ValidationError("size_per_side must be positive");
  BenchmarkSplit split;
  split.difficulty = difficulty;
  split.length_bucket = config.length_bucket;

  // Each construction draws from its own stream so Mix splits reproduce the
  // Random and Hard sides exactly.
  auto random_members = [&] {
    return random_side(pools.member_kept, config.size_per_side, stream(config.seed, 1), "member");
  };
  auto random_non_members = [&] {
    return random_side(pools.non_member_kept, config.size_per_side, stream(config.seed, 2),
                       "non-member");
  };
  auto clustered = [&](Difficulty mode, bool member_side) {
    const auto pair_mode = mode == Difficulty::easy   ? PairMode::farthest
                           : mode == Difficulty::hard ? PairMode::closest
                                                      : PairMode::median;
    const auto pair = pick_cluster_pair(pools.member_clusters, pools.non_member_clusters, pair_mode);
    split.pair = pair;
    if (member_side) {
      return cluster_side(pools.members, pools.member_kept[pair.member_cluster], pair.member_cluster,
                          pools.non_members, pools.non_member_clusters,
                          pools.non_member_kept[pair.non_member_cluster], pair.non_member_cluster,
                          mode, config, stream(config.seed, 3), "member");
    }
    return cluster_side(pools.non_members, pools.non_member_kept[pair.non_member_cluster],
                        pair.non_member_cluster, pools.members, pools.member_clusters,
                        pools.member_kept[pair.member_cluster], pair.member_cluster, mode, config,
                        stream(config.seed, 4), "non-member");
  };

  SideSelection m, nm;
  switch (difficulty) {
    case Difficulty::easy:
    case Difficulty::medium:
    case Difficulty::hard:
      m = clustered(difficulty, true);
      nm = clustered(difficulty, false);
      break;
    case Difficulty::random:
      m = random_members();
      nm = random_non_members();
      break;
    case Difficulty::mix1:
      m = random_members();
      nm = clustered(Difficulty::hard, false);
      break;
    case Difficulty::mix2:
      m = clustered(Difficulty::hard, true);
      nm = random_non_members();
      break;
  }
  for (auto r : m.rows) split.members.push_back(pools.members.ids[r]);
  for (auto r : nm.rows) split.non_members.push_back(pools.non_members.ids[r]);
  split.member_side = std::move(m.provenance);
  split.non_member_side = std::move(nm.provenance);
  return split;
}

namespace {

nlohmann::ordered_json side_json(const SideProvenance& s) {
  nlohmann::ordered_json j;
  j["source"] = s.source;
  j["cluster"] = s.cluster ? nlohmann::ordered_json(*s.cluster) : nlohmann::ordered_json(nullptr);
  j["available"] = s.available;
  j["min_distance_to_opposite"] =
      s.min_distance ? nlohmann::ordered_json(*s.min_distance) : nlohmann::ordered_json(nullptr);
  j["max_distance_to_opposite"] =
      s.max_distance ? nlohmann::ordered_json(*s.max_distance) : nlohmann::ordered_json(nullptr);
  return j;
}

std::vector<std::size_t> sizes(const std::vector<std::vector<std::size_t>>& kept) {
  std::vector<std::size_t> out;
  for (const auto& c : kept) out.push_back(c.size());
  return out;
}

std::vector<std::size_t> cluster_sizes(const Clustering& c) {
  std::vector<std::size_t> out(c.k(), 0);
  for (auto a : c.assignments) ++out[a];
  return out;
}

}  // namespace

void write_split(const BenchmarkSplit& split, const PreparedPools& pools,
                 const BenchgenConfig& config, const fs::path& dir) {
  detail::ensure_directory(dir);
  std::string lines;
  auto emit = [&](const std::string& id, int label) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["label"] = label;
    j["difficulty"] = to_string(split.difficulty);
    j["length_bucket"] = split.length_bucket;
    lines += j.dump();
    lines += '\n';
  };
  for (const auto& id : split.members) emit(id, 1);
  for (const auto& id : split.non_members) emit(id, 0);
  detail::write_file(dir / "split.jsonl", lines);

  nlohmann::ordered_json p;
  p["difficulty"] = to_string(split.difficulty);
  p["length_bucket"] = split.length_bucket;
  p["size_per_side"] = config.size_per_side;
  p["seed"] = config.seed;
  p["k"] = config.k;
  p["min_dist"] = config.min_dist;
  p["opposite_distance"] = config.opposite == OppositeDistance::centroid ? "centroid" : "nearest-point";
  if (split.pair) {
    p["cluster_pair"] = {{"member_cluster", split.pair->member_cluster},
                         {"non_member_cluster", split.pair->non_member_cluster},
                         {"distance", split.pair->distance}};
  } else {
    p["cluster_pair"] = nullptr;
  }
  p["members"] = side_json(split.member_side);
  p["non_members"] = side_json(split.non_member_side);
  p["member_cluster_sizes"] = cluster_sizes(pools.member_clusters);
  p["non_member_cluster_sizes"] = cluster_sizes(pools.non_member_clusters);
  p["member_kept_sizes"] = sizes(pools.member_kept);
  p["non_member_kept_sizes"] = sizes(pools.non_member_kept);
  detail::write_file(dir / "provenance.json", p.dump(2) + "\n");
}

}  // namespace miaforge
