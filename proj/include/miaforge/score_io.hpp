#pragma once

#include <filesystem>
#include <string>

#include "miaforge/types.hpp"

namespace miaforge {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// CSV with header `doc_id,score,method`, one row per document.
std::string scores_to_csv(const ScoreVector& scores);
ScoreVector scores_from_csv(const std::string& text);

void write_scores_csv(const ScoreVector& scores, const std::filesystem::path& path);
ScoreVector read_scores_csv(const std::filesystem::path& path);

/// Labels from a JSONL file whose lines carry "id" and "label" (0/1), e.g.
/// docs.jsonl or a benchmark split.jsonl.
Labels read_labels_jsonl(const std::filesystem::path& path);

}  // namespace miaforge
