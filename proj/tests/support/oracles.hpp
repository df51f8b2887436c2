#pragma once

// Quadratic reference implementations of the rank statistics, written
// straight from the pairwise definitions and sharing no code with the
// library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline int sign(double x) { return (x > 0) - (x < 0); }

/// Fraction of (member, non-member) pairs ranked correctly, ties half.
inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
  std::int64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

/// Tau-b from the concordance table.
inline double kendall(const std::vector<double>& a, const std::vector<double>& b) {
  std::int64_t s = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const int da = sign(a[i] - a[j]);
      const int db = sign(b[i] - b[j]);
      s += da * db;
      na += da != 0;
      nb += db != 0;
    }
  }
  return static_cast<double>(s) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
}

/// 1 + #smaller + half the other members of the tie group.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (j == i) continue;
      less += v[j] < v[i];
      equal += v[j] == v[i];
    }
    r[i] = 1.0 + less + 0.5 * equal;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

inline double rank_diff(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  double sum = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) sum += std::abs(ra[i] - rb[i]);
  return sum / static_cast<double>(ra.size());
}

/// Every threshold t in {+inf} and the scores; predict member iff s >= t.
inline double tpr_at_fpr(const std::vector<double>& s, const std::vector<int>& y, double k) {
  std::vector<double> thresholds = s;
  thresholds.push_back(std::numeric_limits<double>::infinity());
  double pos = 0, neg = 0;
  for (int l : y) (l ? pos : neg) += 1;
  double best = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    }
    if (fp / neg <= k / 100.0) best = std::max(best, tp / pos);
  }
  return best;
}

/// Midpoints between distinct scores plus both infinities; member iff s > t.
inline double best_accuracy(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> thresholds{-std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::infinity()};
  for (double a : s) {
    for (double b : s) {
      if (a < b) thresholds.push_back(0.5 * (a + b));
    }
  }
  double best = 0;
  for (double t : thresholds) {
    double correct = 0;
    for (std::size_t i = 0; i < s.size(); ++i) correct += (s[i] > t) == (y[i] == 1);
    best = std::max(best, correct / static_cast<double>(s.size()));
  }
  return best;
}

/// Random paired instance with heavy ties: values drawn from a small grid.
struct Instance {
  std::vector<double> a, b;
  std::vector<int> labels;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t max_n = 64) {
  std::uniform_int_distribution<std::size_t> size(4, max_n);
  const auto n = size(rng);
  std::uniform_int_distribution<int> levels(2, 12);
  std::uniform_int_distribution<int> va(0, levels(rng)), vb(0, levels(rng));
  Instance inst;
  for (std::size_t i = 0; i < n; ++i) {
    inst.a.push_back(0.25 * va(rng));
    inst.b.push_back(0.25 * vb(rng));
    inst.labels.push_back(static_cast<int>(i % 2));
  }
  std::shuffle(inst.labels.begin(), inst.labels.end(), rng);
  return inst;
}

inline bool constant(const std::vector<double>& v) {
  for (double x : v) {
    if (x != v.front()) return false;
  }
  return true;
}

}  // namespace oracle
