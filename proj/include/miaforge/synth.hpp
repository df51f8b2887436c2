#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "miaforge/archive.hpp"
#include "miaforge/benchgen.hpp"
#include "miaforge/provider.hpp"
#include "miaforge/types.hpp"

namespace miaforge {

/// Parameters of the synthetic log-likelihood simulator.
///
/// The ReCaLL ratio of target x under prefix p is generated directly:
///   R(p, x) = 1 + delta * q_p * m_x + Normal(0, noise_sigma)
/// where m_x is x's membership and q_p >= 0 is p's discriminativeness, drawn
/// around q_nm for non-members and q_m for members. The stored conditional
/// cell is R(p, x) * LL(x), so the ratio read back from the archive is R.
struct SimConfig {
  std::size_t n_members = 100;
  std::size_t n_non_members = 100;
  double delta = 0.5;
  double q_nm = 1.0;
  double q_m = 0.1;
  double jitter = 0.3;
  double noise_sigma = 0.2;
  double ll_mu_m = -3.0;
  double ll_mu_nm = -3.5;
  double ll_spread = 0.5;
  bool with_tokens = true;
  std::uint64_t seed = 0;

  /// Throws ValidationError on negative spreads, zero counts or q_nm < q_m.
  void validate() const;
};

/// Generative ground truth needed to answer concatenated-prefix queries.
struct SimTruth {
  SimConfig config;
  Labels labels;
  std::vector<double> q;
};

/// Dynamic provider backed by the simulator. A concatenated prefix acts
/// like a single prefix whose discriminativeness is the mean of its parts'
/// q; its noise draw is a deterministic function of (seed, prefix order,
/// target). Empty and single-prefix queries read the archive.
class SimProvider final : public LlProvider {
 public:
  SimProvider(const LLArchive& archive, SimTruth truth);

  ProviderCapabilities capabilities() const override { return {true, true}; }
  double conditional_ll(std::span<const std::string> prefix_ids,
                        const std::string& target_id) const override;

  /// Closed-form ReCaLL ratio of a concatenated prefix (n >= 2).
  double concat_ratio(std::span<const std::string> prefix_ids, const std::string& target_id) const;

  const SimTruth& truth() const noexcept { return truth_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> uncond_;
  Matrix cond_;
  SimTruth truth_;
};

struct SimResult {
  LLArchive archive;
  SimTruth truth;
  /// Generative ratio matrix R(p, x).
  Matrix ratio;
  std::shared_ptr<const SimProvider> provider;
};

SimResult generate_archive(const SimConfig& config);

void save_sim_truth(const SimTruth& truth, const std::filesystem::path& path);
SimTruth load_sim_truth(const std::filesystem::path& path);

/// Scores m_x * s + Normal(0, 1) with s found by bisection so that the
/// realized AUC lies within 0.02 of target_auc (0.5 <= target <= 1).
ScoreVector noisy_init(const Labels& labels, double target_auc, std::uint64_t seed);

/// Clustered embedding pools for benchmark construction tests.
struct BlobConfig {
  std::size_t clusters = 4;
  std::size_t points_per_side = 4000;
  std::size_t dim = 256;
  /// Expected cosine similarity between two points of the same blob.
  double within_cosine = 0.12;
  std::uint64_t seed = 0;
};

struct BlobPools {
  EmbeddingSet members;
  EmbeddingSet non_members;
};

BlobPools generate_blobs(const BlobConfig& config);

}  // namespace miaforge
