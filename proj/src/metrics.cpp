#include "miaforge/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <numeric>

#include "miaforge/error.hpp"

namespace miaforge {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("scores and labels differ in length (" + std::to_string(scores.size()) +
                          " vs " + std::to_string(labels.size()) + ")");
  }
  ClassCounts c;
  for (int l : labels) {
    if (l == 1) {
      ++c.pos;
    } else if (l == 0) {
      ++c.neg;
    } else {
      throw ValidationError("labels must be 0 or 1, got " + std::to_string(l));
    }
  }
  if (c.pos == 0 || c.neg == 0) {
    throw DegenerateError("degenerate labels: need both members and non-members (got " +
                          std::to_string(c.pos) + " members, " + std::to_string(c.neg) +
                          " non-members)");
  }
  return c;
}

void check_paired(std::span<const double> a, std::span<const double> b, std::size_t min_n) {
  if (a.size() != b.size()) {
    throw ValidationError("paired vectors differ in length (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < min_n) {
    throw DegenerateError("need at least " + std::to_string(min_n) + " paired values");
  }
}

/// Cumulative (tp, fp) after admitting each group of tied scores, scanning
/// from the highest score down. Element 0 is the empty selection.
struct SweepPoint {
  std::size_t tp = 0;
  std::size_t fp = 0;
};

std::vector<SweepPoint> threshold_sweep(std::span<const double> scores,
                                        std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  std::vector<SweepPoint> sweep{{0, 0}};
  SweepPoint cur;
  for (std::size_t k = 0; k < order.size();) {
    const double v = scores[order[k]];
    while (k < order.size() && scores[order[k]] == v) {
      if (labels[order[k]] == 1) {
        ++cur.tp;
      } else {
        ++cur.fp;
      }
      ++k;
    }
    sweep.push_back(cur);
  }
  return sweep;
}

/// Counts inversions (pairs i < j with v[i] > v[j]) by merge sort.
std::uint64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buf(v.size());
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      const auto mid = std::min(lo + width, v.size());
      const auto hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          inversions += mid - i;
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return inversions;
}

/// Sum over runs of equal adjacent values of t(t-1)/2.
template <typename Eq>
std::uint64_t tied_pairs(std::size_t n, Eq equal_to_prev) {
  std::uint64_t pairs = 0;
  std::uint64_t run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (equal_to_prev(i)) {
      ++run;
    } else {
      pairs += run * (run - 1) / 2;
      run = 1;
    }
  }
  pairs += run * (run - 1) / 2;
  return pairs;
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(values.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end < order.size() && values[order[end]] == values[order[k]]) ++end;
    // ranks k+1 .. end averaged
    const double rank = 0.5 * static_cast<double>(k + 1 + end);
    for (std::size_t m = k; m < end; ++m) ranks[order[m]] = rank;
    k = end;
  }
  return ranks;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_binary(scores, labels);
  const auto ranks = fractional_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  const double p = static_cast<double>(c.pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(c.neg));
}

double auc_roc(const ScoreVector& scores, const Labels& labels) {
  const auto a = align(scores, labels);
  return auc_roc(a.scores, a.labels);
}

double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double k_percent) {
  const auto c = check_binary(scores, labels);
  const double max_fpr = k_percent / 100.0;
  double best = 0.0;
  for (const auto& pt : threshold_sweep(scores, labels)) {
    const double fpr = static_cast<double>(pt.fp) / static_cast<double>(c.neg);
    if (fpr <= max_fpr) {
      best = std::max(best, static_cast<double>(pt.tp) / static_cast<double>(c.pos));
    }
  }
  return best;
}

double best_accuracy(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_binary(scores, labels);
  const double n = static_cast<double>(scores.size());
  double best = 0.0;
  for (const auto& pt : threshold_sweep(scores, labels)) {
    const auto correct = pt.tp + (c.neg - pt.fp);
    best = std::max(best, static_cast<double>(correct) / n);
  }
  return best;
}

RocResult roc_curve(std::span<const double> scores, std::span<const int> labels,
                    std::span<const double> k_percents) {
  const auto c = check_binary(scores, labels);
  RocResult out;
  for (const auto& pt : threshold_sweep(scores, labels)) {
    out.roc_points.push_back({static_cast<double>(pt.fp) / static_cast<double>(c.neg),
                              static_cast<double>(pt.tp) / static_cast<double>(c.pos)});
  }
  out.auc = auc_roc(scores, labels);
  for (double k : k_percents) out.tpr_at[k] = tpr_at_fpr(scores, labels, k);
  return out;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  check_paired(a, b, 2);
  const auto n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x] < a[y] || (a[x] == a[y] && b[x] < b[y]);
  });

  const auto n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const auto ties_a = tied_pairs(n, [&](std::size_t i) { return a[order[i]] == a[order[i - 1]]; });
  const auto ties_ab = tied_pairs(n, [&](std::size_t i) {
    return a[order[i]] == a[order[i - 1]] && b[order[i]] == b[order[i - 1]];
  });

  std::vector<double> bs(n);
  for (std::size_t i = 0; i < n; ++i) bs[i] = b[order[i]];
  const auto discordant = count_inversions(bs);  // bs is now sorted
  const auto ties_b = tied_pairs(n, [&](std::size_t i) { return bs[i] == bs[i - 1]; });

  if (ties_a == n0 || ties_b == n0) {
    throw DegenerateError("kendall tau undefined: one vector is constant");
  }
  // concordant - discordant, with pairs tied in a or b counting as neither
  const auto numerator = static_cast<std::int64_t>(n0 - ties_a - ties_b + ties_ab) -
                         2 * static_cast<std::int64_t>(discordant);
  return static_cast<double>(numerator) /
         std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
}

double kendall_tau(const ScoreVector& a, const ScoreVector& b) {
  return kendall_tau(a.scores, align_to(a, b));
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  check_paired(a, b, 2);
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw DegenerateError("spearman rho undefined: zero rank variance");
  }
  return sab / std::sqrt(saa * sbb);
}

double spearman_rho(const ScoreVector& a, const ScoreVector& b) {
  return spearman_rho(a.scores, align_to(a, b));
}

double rank_diff(std::span<const double> a, std::span<const double> b) {
  check_paired(a, b, 1);
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  double sum = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) sum += std::abs(ra[i] - rb[i]);
  return sum / static_cast<double>(ra.size());
}

double rank_diff(const ScoreVector& a, const ScoreVector& b) {
  return rank_diff(a.scores, align_to(a, b));
}

MetricsReport evaluate(const ScoreVector& scores, const Labels& labels) {
  const auto a = align(scores, labels);
  const auto roc = roc_curve(a.scores, a.labels);
  MetricsReport r;
  r.auc = roc.auc;
  r.tpr_at = roc.tpr_at;
  r.best_accuracy = best_accuracy(a.scores, a.labels);
  r.n_pos = static_cast<std::size_t>(std::count(a.labels.begin(), a.labels.end(), 1));
  r.n_neg = a.labels.size() - r.n_pos;
  return r;
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  nlohmann::ordered_json tpr;
  for (const auto& [k, v] : report.tpr_at) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), k);
    tpr[std::string(buf, res.ptr)] = v;
  }
  j["tpr_at"] = tpr;
  j["best_accuracy"] = report.best_accuracy;
  j["n_pos"] = report.n_pos;
  j["n_neg"] = report.n_neg;
  return j.dump();
}

}  // namespace miaforge
