#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaforge/archive.hpp"
#include "miaforge/provider.hpp"
#include "miaforge/types.hpp"

namespace miaforge {

/// Scoring function S(ReCaLL_p, f, D) for the prefix-score update.
enum class PrefixScoring {
  auc_pseudo,     // AUC of ReCaLL_p against pseudo-labels thresholded from f
  neg_rank_diff,  // -(mean |rank(ReCaLL_p) - rank(f)|)
  kendall,
  spearman,
};

enum class MembershipUpdate {
  neg_prefix_score,  // f(x) = -r(x)
  topk_concat,       // f(x) = ReCaLL over the concatenated top-k prefixes
};

/// Order of the top-k documents inside the concatenated prefix.
enum class ConcatOrder {
  reverse_score,  // highest prefix score adjacent to the target
  score,          // highest prefix score first
};

enum class OracleMetric { auc, best_accuracy, tpr_at_k };

struct EmConfig {
  std::string init_method = "minkpp";
  double init_k_percent = 20.0;
  PrefixScoring scoring = PrefixScoring::auc_pseudo;
  double tau_percentile = 50.0;
  MembershipUpdate membership_update = MembershipUpdate::neg_prefix_score;
  std::size_t topk_n = 12;
  ConcatOrder concat_order = ConcatOrder::reverse_score;
  std::size_t max_iters = 10;
  /// Stop once Spearman rho between successive membership vectors reaches
  /// this value.
  double convergence_rho = 0.995;
  /// Also stop when the membership vector repeats an earlier iterate
  /// exactly; the update is deterministic, so the sequence is periodic.
  bool detect_cycles = true;
  bool exclude_self = true;
  std::uint64_t seed = 0;
};

std::string to_string(PrefixScoring s);
std::string to_string(MembershipUpdate u);

struct EmIteration {
  std::size_t iteration = 0;
  ScoreVector membership;
  PrefixScoreVector prefix;
  /// Spearman rho between this iteration's membership scores and the
  /// previous ones.
  double rho = 0.0;
  std::size_t pseudo_members = 0;
};

struct EmTrace {
  std::vector<EmIteration> iterations;
  std::size_t final_iteration = 0;
  bool converged = false;
  std::string converged_by;  // "rho", "cycle" or empty
  std::size_t total_fallbacks = 0;
};

struct EmResult {
  ScoreVector membership;
  PrefixScoreVector prefix;
  EmTrace trace;
};

/// Prefix scores measured against ground-truth labels: r(p) is `metric` of
/// ReCaLL_p on D \ {p} (or D when exclude_self is false). Throws
/// DegenerateError listing every prefix whose evaluation set is single-class.
PrefixScoreVector oracle_prefix_scores(const LLArchive& archive, const Labels& labels,
                                       OracleMetric metric = OracleMetric::auc,
                                       bool exclude_self = true, double k_percent = 1.0);

/// 1 iff f(x) > tau, tau being the tau_percentile-th percentile of f (linear
/// interpolation). If a class would be empty, tau moves to the nearest value
/// that leaves both classes non-empty. Throws DegenerateError when all f are
/// equal.
Labels pseudo_labels(const ScoreVector& f, double tau_percentile);

/// r(p) = S(ReCaLL_p, f, D) for every document p. Prefixes whose statistic
/// is undefined get 0.5 (auc_pseudo) or 0 and are listed in `fallbacks`.
PrefixScoreVector update_prefix_scores(const LLArchive& archive, const ScoreVector& f,
                                       const EmConfig& config);

ScoreVector update_membership(const PrefixScoreVector& r, const ScoringContext& ctx,
                              const EmConfig& config);

/// Label-free initial scores named by config.init_method: loss, ref, zlib,
/// mink, minkpp, avg, avgp or rand.
ScoreVector initial_scores(const ScoringContext& ctx, const EmConfig& config);

EmResult run_em(const ScoringContext& ctx, const EmConfig& config);
EmResult run_em(const ScoringContext& ctx, const EmConfig& config, ScoreVector init);

/// One JSON object per iteration.
std::string trace_to_jsonl(const EmTrace& trace);

}  // namespace miaforge
