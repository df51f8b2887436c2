#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miaforge/types.hpp"

namespace miaforge {

/// N x D embedding matrix with one id per row.
struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix vectors;
  bool normalized = false;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return vectors.cols(); }
};

/// Reads `manifest.json` + `emb.f32` (row-major little-endian float32).
EmbeddingSet load_embeddings(const std::filesystem::path& dir);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& dir);

/// Rows scaled to unit L2 norm. Throws ValidationError on zero or
/// non-finite rows.
EmbeddingSet normalized(EmbeddingSet set);

/// 1 - cosine similarity, in [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

struct Clustering {
  std::vector<std::size_t> assignments;
  Matrix centroids;  // K x D, unit rows
  double inertia = 0.0;  // sum of cosine distances to assigned centroids
  /// Objective after every assignment step.
  std::vector<double> objective_history;
  std::size_t iterations = 0;

  std::size_t k() const noexcept { return centroids.rows(); }
  /// Row indices assigned to cluster c, ascending.
  std::vector<std::size_t> members(std::size_t c) const;
};

/// Spherical k-means: rows L2-normalized, k-means++ seeding on cosine
/// distance, Lloyd iterations until the assignment is stable or max_iters.
/// Every cluster of the result is non-empty.
Clustering kmeans(const EmbeddingSet& embeddings, std::size_t k, std::uint64_t seed,
                  std::size_t max_iters = 100);

/// Scans `rows` in order and keeps a row iff its cosine distance to every
/// row kept so far is at least min_dist.
std::vector<std::size_t> dedup_greedy(std::span<const std::size_t> rows,
                                      const EmbeddingSet& embeddings, double min_dist = 0.6);
std::vector<std::string> dedup_greedy(std::span<const std::string> ids,
                                      const EmbeddingSet& embeddings, double min_dist = 0.6);

enum class PairMode { farthest, closest, median };

struct ClusterPair {
  std::size_t member_cluster = 0;
  std::size_t non_member_cluster = 0;
  double distance = 0.0;
};

/// Centroid pair chosen by cosine distance over all K_m x K_nm pairs.
/// Median is the lower median of the sorted pair list; ties go to the
/// lowest (member, non-member) index pair.
ClusterPair pick_cluster_pair(const Clustering& members, const Clustering& non_members,
                              PairMode mode);

enum class Difficulty { easy, medium, hard, random, mix1, mix2 };

std::string to_string(Difficulty d);
Difficulty parse_difficulty(const std::string& name);

/// What "distance to the opposite cluster" is measured against.
enum class OppositeDistance { centroid, nearest_point };

struct BenchgenConfig {
  std::size_t k = 50;
  double min_dist = 0.6;
  std::size_t size_per_side = 500;
  std::uint64_t seed = 0;
  OppositeDistance opposite = OppositeDistance::centroid;
  int length_bucket = 128;
  std::size_t max_iters = 100;
};

/// Both pools clustered and deduplicated, ready for split assembly.
struct PreparedPools {
  EmbeddingSet members;
  EmbeddingSet non_members;
  Clustering member_clusters;
  Clustering non_member_clusters;
  /// Per cluster: rows surviving dedup, in pool order.
  std::vector<std::vector<std::size_t>> member_kept;
  std::vector<std::vector<std::size_t>> non_member_kept;
};

PreparedPools prepare_pools(EmbeddingSet members, EmbeddingSet non_members,
                            const BenchgenConfig& config);

struct SideProvenance {
  std::string source;  // "farthest", "closest", "cluster-sample" or "random"
  std::optional<std::size_t> cluster;
  std::size_t available = 0;
  std::optional<double> min_distance;  // to the opposite cluster
  std::optional<double> max_distance;
};

struct BenchmarkSplit {
  std::vector<std::string> members;
  std::vector<std::string> non_members;
  Difficulty difficulty = Difficulty::random;
  int length_bucket = 128;
  std::optional<ClusterPair> pair;
  SideProvenance member_side;
  SideProvenance non_member_side;
};

/// Builds one balanced split. Throws ValidationError when a source pool
/// holds fewer than size_per_side rows after dedup.
BenchmarkSplit assemble_split(const PreparedPools& pools, Difficulty difficulty,
                              const BenchgenConfig& config);

/// Writes `split.jsonl` ({"id","label","difficulty","length_bucket"} per
/// line, members first) and `provenance.json`.
void write_split(const BenchmarkSplit& split, const PreparedPools& pools,
                 const BenchgenConfig& config, const std::filesystem::path& dir);

}  // namespace miaforge
