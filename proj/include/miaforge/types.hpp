#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace miaforge {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-document membership scores. Orientation is fixed across the whole
/// library: a greater score means "more member-like".
struct ScoreVector {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::string method;

  std::size_t size() const noexcept { return ids.size(); }
  double at(const std::string& id) const;
};

/// Per-document prefix scores r(p): greater means a more discriminative
/// prefix.
struct PrefixScoreVector {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::string metric;
  /// Prefixes whose score fell back to a neutral value because the
  /// underlying statistic was undefined.
  std::vector<std::string> fallbacks;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Binary membership labels (1 = member, 0 = non-member) keyed by id.
struct Labels {
  std::vector<std::string> ids;
  std::vector<int> values;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t positives() const;
  std::unordered_map<std::string, int> as_map() const;
};

/// Scores and labels joined on id, in the score vector's order.
struct AlignedLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Inner join on id. Throws ValidationError naming ids present on only one
/// side.
AlignedLabels align(const ScoreVector& scores, const Labels& labels);

/// Reorders `other` to follow `order`'s ids. Throws ValidationError on any id
/// mismatch.
std::vector<double> align_to(const ScoreVector& order, const ScoreVector& other);

/// Same vector with every score negated (orientation flip).
ScoreVector flipped(ScoreVector scores);

}  // namespace miaforge
