#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "miaforge/archive.hpp"
#include "miaforge/provider.hpp"
#include "miaforge/types.hpp"

namespace miaforge {

// Membership-score methods other than EM-MIA. Every method returns scores
// oriented "greater = more member-like" and covering every archive document
// in archive order.

/// Raw unconditional LL (the negated loss).
ScoreVector score_loss(const LLArchive& archive);

/// Token-mean LL under the target model minus token-mean LL under the
/// reference model. Throws MethodUnavailableError listing documents without
/// reference log-probabilities.
ScoreVector score_ref(const LLArchive& archive);

/// LL / zlib-compressed size in bytes.
ScoreVector score_zlib(const LLArchive& archive);

/// Mean of the ceil(T * k / 100) lowest token log-probs (at least one).
ScoreVector score_mink(const LLArchive& archive, double k_percent = 20.0);

/// Min-K% on z-scored tokens: (logprob - mu) / max(sigma, 1e-8).
ScoreVector score_minkpp(const LLArchive& archive, double k_percent = 20.0);

inline constexpr double kSigmaFloor = 1e-8;

/// ReCaLL_p(x) = LL(x | p) / LL(x) for archive indices.
double recall_ratio(const LLArchive& archive, std::size_t prefix, std::size_t target);

/// ReCaLL scores of every document under one prefix (the prefix itself
/// included).
ScoreVector score_recall_single(const LLArchive& archive, const std::string& prefix_id);

enum class MultiPrefixMode {
  concat,    // one prefix p_1 ⊕ ... ⊕ p_n, needs a dynamic provider
  ensemble,  // mean of single-prefix ReCaLL scores
};

ScoreVector score_recall_multi(const ScoringContext& ctx, std::span<const std::string> prefix_ids,
                               MultiPrefixMode mode);

enum class PrefixStrategy {
  rand,             // uniform over all documents
  rand_member,      // uniform over labelled members
  rand_non_member,  // uniform over labelled non-members
  top_pref,         // highest oracle prefix scores
};

/// Default shot count for ReCaLL-based baselines.
inline constexpr std::size_t kDefaultShots = 12;

struct PrefixSelection {
  PrefixStrategy strategy = PrefixStrategy::rand;
  std::size_t n = kDefaultShots;
  std::uint64_t seed = 0;
};

bool uses_labels(PrefixStrategy strategy);
std::string to_string(PrefixStrategy strategy);

/// Picks n prefix ids. `labels` is required for rand_member/rand_non_member,
/// `oracle_scores` for top_pref (ordered by descending score, ties by
/// archive order). Random strategies are deterministic given the seed.
std::vector<std::string> select_prefixes(const LLArchive& archive, const PrefixSelection& selection,
                                         const Labels* labels = nullptr,
                                         const PrefixScoreVector* oracle_scores = nullptr);

/// Avg(x) = mean over all prefixes p of ReCaLL_p(x).
ScoreVector score_avg(const LLArchive& archive);

/// AvgP(p) = mean over all targets x of ReCaLL_p(x), used as p's own score.
ScoreVector score_avgp(const LLArchive& archive);

}  // namespace miaforge
