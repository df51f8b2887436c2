#include "miaforge/emmia.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "miaforge/baselines.hpp"
#include "miaforge/error.hpp"
#include "miaforge/metrics.hpp"
#include "miaforge/parallel.hpp"

namespace miaforge {

namespace {

std::vector<double> recall_row(const LLArchive& archive, std::size_t p) {
  std::vector<double> row(archive.size());
  for (std::size_t x = 0; x < archive.size(); ++x) row[x] = recall_ratio(archive, p, x);
  return row;
}

template <typename T>
std::vector<T> drop_index(const std::vector<T>& v, std::size_t skip, bool enabled) {
  if (!enabled) return v;
  std::vector<T> out;
  out.reserve(v.size() - 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != skip) out.push_back(v[i]);
  }
  return out;
}

std::vector<int> labels_in_archive_order(const LLArchive& archive, const Labels& labels) {
  const auto a = align(ScoreVector{archive.ids(), std::vector<double>(archive.size()), ""}, labels);
  return a.labels;
}

/// Spearman rho with constant vectors mapped to 1 (identical ranks) or 0.
double successive_rho(const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return spearman_rho(a, b);
  } catch (const DegenerateError&) {
    return fractional_ranks(a) == fractional_ranks(b) ? 1.0 : 0.0;
  }
}

}  // namespace

std::string to_string(PrefixScoring s) {
  switch (s) {
    case PrefixScoring::auc_pseudo:
      return "auc";
    case PrefixScoring::neg_rank_diff:
      return "rankdiff";
    case PrefixScoring::kendall:
      return "kendall";
    case PrefixScoring::spearman:
      return "spearman";
  }
  return "unknown";
}

std::string to_string(MembershipUpdate u) {
  return u == MembershipUpdate::neg_prefix_score ? "neg-prefix" : "topk-concat";
}

PrefixScoreVector oracle_prefix_scores(const LLArchive& archive, const Labels& labels,
                                       OracleMetric metric, bool exclude_self, double k_percent) {
  const auto truth = labels_in_archive_order(archive, labels);
  const auto n = archive.size();
  PrefixScoreVector out;
  out.ids = archive.ids();
  out.scores.assign(n, 0.0);
  out.metric = metric == OracleMetric::auc             ? "oracle-auc"
               : metric == OracleMetric::best_accuracy ? "oracle-accuracy"
                                                       : "oracle-tpr";
  std::vector<char> degenerate(n, 0);
  parallel_for(n, [&](std::size_t p) {
    const auto scores = drop_index(recall_row(archive, p), p, exclude_self);
    const auto lab = drop_index(truth, p, exclude_self);
    try {
      switch (metric) {
        case OracleMetric::auc:
          out.scores[p] = auc_roc(scores, lab);
          break;
        case OracleMetric::best_accuracy:
          out.scores[p] = best_accuracy(scores, lab);
          break;
        case OracleMetric::tpr_at_k:
          out.scores[p] = tpr_at_fpr(scores, lab, k_percent);
          break;
      }
    } catch (const DegenerateError&) {
      degenerate[p] = 1;
    }
  });
  std::vector<std::string> offenders;
  for (std::size_t p = 0; p < n; ++p) {
    if (degenerate[p]) offenders.push_back(archive.id(p));
  }
  if (!offenders.empty()) {
    std::string msg = "degenerate labels for oracle prefix score of";
    for (const auto& id : offenders) msg += " '" + id + "'";
    throw DegenerateError(msg, offenders);
  }
  return out;
}

Labels pseudo_labels(const ScoreVector& f, double tau_percentile) {
  if (f.size() < 2) throw DegenerateError("pseudo-labels need at least two documents");
  if (!(tau_percentile >= 0.0 && tau_percentile <= 100.0)) {
    throw ValidationError("tau percentile must lie in [0, 100]");
  }
  std::vector<double> sorted = f.scores;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    throw DegenerateError("pseudo-labels undefined: all membership scores are equal");
  }
  const double h = static_cast<double>(sorted.size() - 1) * tau_percentile / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  double tau = sorted[lo];
  if (lo + 1 < sorted.size()) tau += (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);

  if (tau >= sorted.back()) {
    // nothing above tau: lower it to the largest value below the maximum
    tau = *std::prev(std::lower_bound(sorted.begin(), sorted.end(), sorted.back()));
  } else if (tau < sorted.front()) {
    tau = sorted.front();
  }

  Labels out;
  out.ids = f.ids;
  out.values.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out.values[i] = f.scores[i] > tau ? 1 : 0;
  return out;
}

PrefixScoreVector update_prefix_scores(const LLArchive& archive, const ScoreVector& f,
                                       const EmConfig& config) {
  const auto n = archive.size();
  const auto order = ScoreVector{archive.ids(), {}, ""};
  const auto fv = align_to(order, f);

  std::vector<int> pseudo;
  if (config.scoring == PrefixScoring::auc_pseudo) {
    pseudo = pseudo_labels(ScoreVector{archive.ids(), fv, ""}, config.tau_percentile).values;
  }
  const double fallback_value = config.scoring == PrefixScoring::auc_pseudo ? 0.5 : 0.0;

  PrefixScoreVector out;
  out.ids = archive.ids();
  out.scores.assign(n, 0.0);
  out.metric = to_string(config.scoring);
  std::vector<char> fell_back(n, 0);

  parallel_for(n, [&](std::size_t p) {
    const auto recall = drop_index(recall_row(archive, p), p, config.exclude_self);
    try {
      switch (config.scoring) {
        case PrefixScoring::auc_pseudo:
          out.scores[p] = auc_roc(recall, drop_index(pseudo, p, config.exclude_self));
          break;
        case PrefixScoring::neg_rank_diff:
          out.scores[p] = -rank_diff(recall, drop_index(fv, p, config.exclude_self));
          break;
        case PrefixScoring::kendall:
          out.scores[p] = kendall_tau(recall, drop_index(fv, p, config.exclude_self));
          break;
        case PrefixScoring::spearman:
          out.scores[p] = spearman_rho(recall, drop_index(fv, p, config.exclude_self));
          break;
      }
    } catch (const DegenerateError&) {
      out.scores[p] = fallback_value;
      fell_back[p] = 1;
    }
  });
  for (std::size_t p = 0; p < n; ++p) {
    if (fell_back[p]) out.fallbacks.push_back(archive.id(p));
  }
  return out;
}

ScoreVector update_membership(const PrefixScoreVector& r, const ScoringContext& ctx,
                              const EmConfig& config) {
  const auto& archive = ctx.archive;
  const auto rv = align_to(ScoreVector{archive.ids(), {}, ""}, ScoreVector{r.ids, r.scores, ""});

  if (config.membership_update == MembershipUpdate::neg_prefix_score) {
    ScoreVector f{archive.ids(), rv, "em-mia"};
    for (auto& v : f.scores) v = -v;
    return f;
  }

  if (config.topk_n == 0 || config.topk_n > archive.size()) {
    throw ValidationError("topk_n must lie in [1, N]");
  }
  if (config.topk_n > 1 && !ctx.dynamic_prefix()) {
    throw CapabilityError("topk-concat membership update needs a dynamic_prefix provider");
  }
  std::vector<std::size_t> order(archive.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rv[a] > rv[b]; });
  order.resize(config.topk_n);
  if (config.concat_order == ConcatOrder::reverse_score) std::reverse(order.begin(), order.end());
  std::vector<std::string> prefix;
  for (auto i : order) prefix.push_back(archive.id(i));

  auto f = score_recall_multi(ctx, prefix, MultiPrefixMode::concat);
  f.method = "em-mia";
  return f;
}

ScoreVector initial_scores(const ScoringContext& ctx, const EmConfig& config) {
  const auto& m = config.init_method;
  const auto& archive = ctx.archive;
  if (m == "loss") return score_loss(archive);
  if (m == "ref") return score_ref(archive);
  if (m == "zlib") return score_zlib(archive);
  if (m == "mink") return score_mink(archive, config.init_k_percent);
  if (m == "minkpp") return score_minkpp(archive, config.init_k_percent);
  if (m == "avg") return score_avg(archive);
  if (m == "avgp") return score_avgp(archive);
  if (m == "rand") {
    PrefixSelection sel{PrefixStrategy::rand, std::min(config.topk_n, archive.size()), config.seed};
    const auto prefixes = select_prefixes(archive, sel);
    const auto mode = ctx.dynamic_prefix() ? MultiPrefixMode::concat : MultiPrefixMode::ensemble;
    return score_recall_multi(ctx, prefixes, mode);
  }
  throw ValidationError("unknown EM-MIA init method '" + m + "'");
}

EmResult run_em(const ScoringContext& ctx, const EmConfig& config) {
  ScoreVector init;
  try {
    init = initial_scores(ctx, config);
  } catch (const Error& e) {
    throw MethodUnavailableError("EM-MIA initialization with '" + config.init_method +
                                 "' failed: " + e.what());
  }
  return run_em(ctx, config, std::move(init));
}

EmResult run_em(const ScoringContext& ctx, const EmConfig& config, ScoreVector init) {
  if (config.max_iters == 0) throw ValidationError("max_iters must be positive");
  if (config.membership_update == MembershipUpdate::topk_concat && config.topk_n > 1 &&
      !ctx.dynamic_prefix()) {
    throw CapabilityError("topk-concat membership update needs a dynamic_prefix provider");
  }
  const auto& archive = ctx.archive;
  const ScoreVector order{archive.ids(), {}, ""};
  std::vector<double> f = align_to(order, init);
  std::vector<std::vector<double>> history{f};

  EmResult result;
  for (std::size_t t = 1; t <= config.max_iters; ++t) {
    const ScoreVector current{archive.ids(), f, "em-mia"};
    EmIteration it;
    it.iteration = t;
    if (config.scoring == PrefixScoring::auc_pseudo) {
      it.pseudo_members = pseudo_labels(current, config.tau_percentile).positives();
    }
    it.prefix = update_prefix_scores(archive, current, config);
    it.membership = update_membership(it.prefix, ctx, config);
    it.rho = successive_rho(it.membership.scores, f);
    result.trace.total_fallbacks += it.prefix.fallbacks.size();

    f = it.membership.scores;
    result.trace.final_iteration = t;
    result.trace.iterations.push_back(std::move(it));

    if (result.trace.iterations.back().rho >= config.convergence_rho) {
      result.trace.converged = true;
      result.trace.converged_by = "rho";
      break;
    }
    if (config.detect_cycles && std::find(history.begin(), history.end(), f) != history.end()) {
      result.trace.converged = true;
      result.trace.converged_by = "cycle";
      break;
    }
    history.push_back(f);
  }
  result.membership = result.trace.iterations.back().membership;
  result.prefix = result.trace.iterations.back().prefix;
  return result;
}

std::string trace_to_jsonl(const EmTrace& trace) {
  std::string out;
  for (const auto& it : trace.iterations) {
    nlohmann::ordered_json j;
    j["iteration"] = it.iteration;
    j["rho"] = it.rho;
    j["pseudo_members"] = it.pseudo_members;
    j["fallbacks"] = it.prefix.fallbacks.size();
    j["fallback_ids"] = it.prefix.fallbacks;
    const bool last = it.iteration == trace.final_iteration;
    j["converged"] = last && trace.converged;
    if (last && trace.converged) j["converged_by"] = trace.converged_by;
    nlohmann::ordered_json f, r;
    for (std::size_t i = 0; i < it.membership.size(); ++i) f[it.membership.ids[i]] = it.membership.scores[i];
    for (std::size_t i = 0; i < it.prefix.size(); ++i) r[it.prefix.ids[i]] = it.prefix.scores[i];
    j["membership"] = f;
    j["prefix"] = r;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace miaforge
