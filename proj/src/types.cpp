#include "miaforge/types.hpp"

#include <algorithm>
#include <sstream>

#include "miaforge/error.hpp"

namespace miaforge {

namespace {

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 10) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
    if (i) os << ", ";
    os << ids[i];
  }
  if (ids.size() > limit) os << ", ... (" << ids.size() << " total)";
  return os.str();
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ValidationError("matrix data has " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
  }
}

double ScoreVector::at(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ValidationError("unknown id in score vector: " + id);
  return scores[static_cast<std::size_t>(it - ids.begin())];
}

std::size_t Labels::positives() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1));
}

std::unordered_map<std::string, int> Labels::as_map() const {
  std::unordered_map<std::string, int> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], values[i]);
  return out;
}

AlignedLabels align(const ScoreVector& scores, const Labels& labels) {
  auto by_id = labels.as_map();
  AlignedLabels out;
  out.scores.reserve(scores.size());
  out.labels.reserve(scores.size());
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto it = by_id.find(scores.ids[i]);
    if (it == by_id.end()) {
      missing.push_back(scores.ids[i]);
      continue;
    }
    out.scores.push_back(scores.scores[i]);
    out.labels.push_back(it->second);
    by_id.erase(it);
  }
  if (!missing.empty()) {
    throw ValidationError("ids without labels: " + join_ids(missing));
  }
  if (!by_id.empty()) {
    std::vector<std::string> extra;
    for (const auto& [id, _] : by_id) extra.push_back(id);
    std::sort(extra.begin(), extra.end());
    throw ValidationError("labelled ids without scores: " + join_ids(extra));
  }
  return out;
}

std::vector<double> align_to(const ScoreVector& order, const ScoreVector& other) {
  if (order.size() != other.size()) {
    throw ValidationError("score vectors cover different id sets (" +
                          std::to_string(order.size()) + " vs " +
                          std::to_string(other.size()) + " ids)");
  }
  std::unordered_map<std::string, double> by_id;
  by_id.reserve(other.size());
  for (std::size_t i = 0; i < other.size(); ++i) by_id.emplace(other.ids[i], other.scores[i]);
  std::vector<double> out;
  out.reserve(order.size());
  std::vector<std::string> missing;
  for (const auto& id : order.ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
    } else {
      out.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    throw ValidationError("score vectors cover different id sets; missing: " +
                          join_ids(missing));
  }
  return out;
}

ScoreVector flipped(ScoreVector scores) {
  for (auto& s : scores.scores) s = -s;
  return scores;
}

}  // namespace miaforge
