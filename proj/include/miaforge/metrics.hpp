#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "miaforge/types.hpp"

namespace miaforge {

// Evaluation and rank statistics. Ties are handled with half credit (AUC)
// and fractional (average) ranks everywhere. Functions taking labels throw
// DegenerateError when only one class is present.

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auc = 0.0;
  /// From (0,0) to (1,1), one point per distinct score threshold.
  std::vector<RocPoint> roc_points;
  /// k_percent -> TPR at FPR <= k%.
  std::map<double, double> tpr_at;
};

/// FPR levels (percent) reported by default.
inline constexpr double kDefaultFprLevels[] = {0.1, 1.0, 5.0, 10.0, 20.0};

/// 1-based average ranks (ties share the mean of the ranks they span).
std::vector<double> fractional_ranks(std::span<const double> values);

/// Mann-Whitney AUC: P(s_member > s_nonmember) + 0.5 P(tie).
double auc_roc(std::span<const double> scores, std::span<const int> labels);
double auc_roc(const ScoreVector& scores, const Labels& labels);

/// Largest TPR over thresholds whose FPR does not exceed k_percent / 100.
double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double k_percent);

/// Best (TP + TN) / N over all thresholds (midpoints between distinct scores
/// plus +-infinity).
double best_accuracy(std::span<const double> scores, std::span<const int> labels);

RocResult roc_curve(std::span<const double> scores, std::span<const int> labels,
                    std::span<const double> k_percents = kDefaultFprLevels);

/// Kendall tau-b, O(n log n).
double kendall_tau(std::span<const double> a, std::span<const double> b);
double kendall_tau(const ScoreVector& a, const ScoreVector& b);

/// Pearson correlation of fractional ranks.
double spearman_rho(std::span<const double> a, std::span<const double> b);
double spearman_rho(const ScoreVector& a, const ScoreVector& b);

/// Mean absolute difference of fractional ranks.
double rank_diff(std::span<const double> a, std::span<const double> b);
double rank_diff(const ScoreVector& a, const ScoreVector& b);

struct MetricsReport {
  double auc = 0.0;
  std::map<double, double> tpr_at;
  double best_accuracy = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

MetricsReport evaluate(const ScoreVector& scores, const Labels& labels);

/// `{"auc":…, "tpr_at":{"0.1":…, …}, "best_accuracy":…, "n_pos":…, "n_neg":…}`
std::string to_json(const MetricsReport& report);

}  // namespace miaforge
