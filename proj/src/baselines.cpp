#include "miaforge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "miaforge/error.hpp"

namespace miaforge {

namespace {

ScoreVector make_scores(const LLArchive& archive, std::string method) {
  ScoreVector out;
  out.ids = archive.ids();
  out.scores.assign(archive.size(), 0.0);
  out.method = std::move(method);
  return out;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size() && i < 10; ++i) os << (i ? ", " : "") << ids[i];
  if (ids.size() > 10) os << ", ... (" << ids.size() << " total)";
  return os.str();
}

/// Token records for every document, or MethodUnavailableError naming the
/// documents without one.
std::vector<const TokenRecord*> require_tokens(const LLArchive& archive, const char* method) {
  std::vector<const TokenRecord*> out(archive.size());
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < archive.size(); ++i) {
    out[i] = archive.token_record(archive.id(i));
    if (!out[i]) missing.push_back(archive.id(i));
  }
  if (!missing.empty()) {
    throw MethodUnavailableError(std::string(method) + " needs token records; missing for " +
                                 join_ids(missing));
  }
  return out;
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t lowest_count(std::size_t tokens, double k_percent) {
  const double raw = static_cast<double>(tokens) * k_percent / 100.0;
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(count, 1, tokens);
}

double mean_of_lowest(std::vector<double> values, double k_percent) {
  const auto count = lowest_count(values.size(), k_percent);
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(count),
                    values.end());
  return mean(std::span<const double>(values.data(), count));
}

void check_k(double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw ValidationError("k_percent must lie in (0, 100], got " + std::to_string(k_percent));
  }
}

std::string k_suffix(double k_percent) {
  std::ostringstream os;
  os << k_percent;
  return os.str();
}

}  // namespace

ScoreVector score_loss(const LLArchive& archive) {
  auto out = make_scores(archive, "loss");
  out.scores = archive.uncond_ll();
  return out;
}

ScoreVector score_ref(const LLArchive& archive) {
  const auto records = require_tokens(archive, "ref");
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i]->ref_logprobs) missing.push_back(archive.id(i));
  }
  if (!missing.empty()) {
    throw MethodUnavailableError("ref needs reference-model log-probs; missing for " +
                                 join_ids(missing));
  }
  auto out = make_scores(archive, "ref");
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.scores[i] = mean(records[i]->token_logprobs) - mean(*records[i]->ref_logprobs);
  }
  return out;
}

ScoreVector score_zlib(const LLArchive& archive) {
  const auto records = require_tokens(archive, "zlib");
  auto out = make_scores(archive, "zlib");
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.scores[i] = archive.uncond_ll(i) / static_cast<double>(records[i]->zlib_bytes);
  }
  return out;
}

ScoreVector score_mink(const LLArchive& archive, double k_percent) {
  check_k(k_percent);
  const auto records = require_tokens(archive, "mink");
  auto out = make_scores(archive, "mink@" + k_suffix(k_percent));
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.scores[i] = mean_of_lowest(records[i]->token_logprobs, k_percent);
  }
  return out;
}

ScoreVector score_minkpp(const LLArchive& archive, double k_percent) {
  check_k(k_percent);
  const auto records = require_tokens(archive, "minkpp");
  auto out = make_scores(archive, "minkpp@" + k_suffix(k_percent));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = *records[i];
    std::vector<double> z(r.token_logprobs.size());
    for (std::size_t t = 0; t < z.size(); ++t) {
      z[t] = (r.token_logprobs[t] - r.mu[t]) / std::max(r.sigma[t], kSigmaFloor);
    }
    out.scores[i] = mean_of_lowest(std::move(z), k_percent);
  }
  return out;
}

double recall_ratio(const LLArchive& archive, std::size_t prefix, std::size_t target) {
  const double uncond = archive.uncond_ll(target);
  if (uncond == 0.0) {
    throw DegenerateError("ReCaLL ratio undefined: uncond_ll of '" + archive.id(target) +
                          "' is zero");
  }
  return archive.cond_ll(prefix, target) / uncond;
}

ScoreVector score_recall_single(const LLArchive& archive, const std::string& prefix_id) {
  const auto p = archive.index_of(prefix_id);
  auto out = make_scores(archive, "recall[" + prefix_id + "]");
  for (std::size_t x = 0; x < archive.size(); ++x) out.scores[x] = recall_ratio(archive, p, x);
  return out;
}

ScoreVector score_recall_multi(const ScoringContext& ctx, std::span<const std::string> prefix_ids,
                               MultiPrefixMode mode) {
  const auto& archive = ctx.archive;
  if (prefix_ids.empty()) throw ValidationError("ReCaLL needs at least one prefix");
  std::vector<std::size_t> prefixes;
  prefixes.reserve(prefix_ids.size());
  for (const auto& id : prefix_ids) prefixes.push_back(archive.index_of(id));

  if (mode == MultiPrefixMode::ensemble) {
    auto out = make_scores(archive, "recall-ensemble");
    for (std::size_t x = 0; x < archive.size(); ++x) {
      double sum = 0.0;
      for (auto p : prefixes) sum += recall_ratio(archive, p, x);
      out.scores[x] = sum / static_cast<double>(prefixes.size());
    }
    return out;
  }

  if (prefix_ids.size() > 1 && !ctx.dynamic_prefix()) {
    throw CapabilityError("concat ReCaLL with " + std::to_string(prefix_ids.size()) +
                          " prefixes needs a dynamic_prefix provider");
  }
  auto out = make_scores(archive, "recall-concat");
  for (std::size_t x = 0; x < archive.size(); ++x) {
    const double uncond = archive.uncond_ll(x);
    if (uncond == 0.0) {
      throw DegenerateError("ReCaLL ratio undefined: uncond_ll of '" + archive.id(x) +
                            "' is zero");
    }
    out.scores[x] = query_cond(ctx, prefix_ids, archive.id(x)) / uncond;
  }
  return out;
}

bool uses_labels(PrefixStrategy strategy) { return strategy != PrefixStrategy::rand; }

std::string to_string(PrefixStrategy strategy) {
  switch (strategy) {
    case PrefixStrategy::rand:
      return "rand";
    case PrefixStrategy::rand_member:
      return "randm";
    case PrefixStrategy::rand_non_member:
      return "randnm";
    case PrefixStrategy::top_pref:
      return "toppref";
  }
  return "unknown";
}

std::vector<std::string> select_prefixes(const LLArchive& archive, const PrefixSelection& selection,
                                         const Labels* labels,
                                         const PrefixScoreVector* oracle_scores) {
  if (selection.n == 0) throw ValidationError("prefix count n must be positive");
  const auto name = to_string(selection.strategy);

  std::vector<std::string> pool;
  switch (selection.strategy) {
    case PrefixStrategy::rand:
      pool = archive.ids();
      break;
    case PrefixStrategy::rand_member:
    case PrefixStrategy::rand_non_member: {
      if (!labels) throw MethodUnavailableError(name + " prefix selection needs labels");
      const int wanted = selection.strategy == PrefixStrategy::rand_member ? 1 : 0;
      const auto by_id = labels->as_map();
      for (const auto& id : archive.ids()) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
          throw MethodUnavailableError(name + " prefix selection: no label for '" + id + "'");
        }
        if (it->second == wanted) pool.push_back(id);
      }
      break;
    }
    case PrefixStrategy::top_pref: {
      if (!oracle_scores) {
        throw MethodUnavailableError("toppref prefix selection needs oracle prefix scores");
      }
      const auto r = align_to(ScoreVector{archive.ids(), {}, ""},
                              ScoreVector{oracle_scores->ids, oracle_scores->scores, ""});
      std::vector<std::size_t> order(archive.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
      if (selection.n > order.size()) {
        throw ValidationError("toppref: requested " + std::to_string(selection.n) +
                              " prefixes from " + std::to_string(order.size()) + " documents");
      }
      std::vector<std::string> out;
      for (std::size_t k = 0; k < selection.n; ++k) out.push_back(archive.id(order[k]));
      return out;
    }
  }

  if (selection.n > pool.size()) {
    throw ValidationError(name + ": requested " + std::to_string(selection.n) +
                          " prefixes but only " + std::to_string(pool.size()) +
                          " eligible documents");
  }
  std::mt19937_64 rng(selection.seed);
  // partial Fisher-Yates
  for (std::size_t k = 0; k < selection.n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(selection.n);
  return pool;
}

ScoreVector score_avg(const LLArchive& archive) {
  auto out = make_scores(archive, "avg");
  const auto n = archive.size();
  for (std::size_t x = 0; x < n; ++x) {
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) sum += recall_ratio(archive, p, x);
    out.scores[x] = sum / static_cast<double>(n);
  }
  return out;
}

ScoreVector score_avgp(const LLArchive& archive) {
  auto out = make_scores(archive, "avgp");
  const auto n = archive.size();
  for (std::size_t p = 0; p < n; ++p) {
    double sum = 0.0;
    for (std::size_t x = 0; x < n; ++x) sum += recall_ratio(archive, p, x);
    out.scores[p] = sum / static_cast<double>(n);
  }
  return out;
}

}  // namespace miaforge
