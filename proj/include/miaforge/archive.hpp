#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "miaforge/types.hpp"

namespace miaforge {

/// One test instance.
struct Document {
  std::string id;
  std::string text;
  std::optional<int> label;  // 1 member, 0 non-member, empty = unknown
  std::optional<std::string> pool;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Per-token quantities needed by the classical likelihood baselines.
/// All log-probabilities are natural-log.
struct TokenRecord {
  std::string doc_id;
  std::vector<double> token_logprobs;
  std::vector<double> mu;     // expected log-prob under the next-token distribution
  std::vector<double> sigma;  // std-dev of log-prob under the next-token distribution
  std::optional<std::vector<double>> ref_logprobs;
  std::int64_t zlib_bytes = 0;

  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

struct ProviderCapabilities {
  bool pairwise = true;
  bool dynamic_prefix = false;
};

/// The log-likelihood archive every attack runs on.
///
/// Holds the unconditional mean per-token log-likelihood LL(x) of each
/// document and the N x N matrix cond(i, j) = LL(x_j | x_i), where x_i is
/// prepended as a prefix and only x_j's tokens are averaged. Values are in
/// nats per token. The diagonal (a document conditioned on itself) is stored
/// as measured; consumers decide whether to use it.
///
/// Immutable after construction; the constructor validates every invariant
/// and throws ValidationError naming the offending id or cell.
class LLArchive {
 public:
  LLArchive(std::vector<Document> docs, std::vector<double> uncond_ll, Matrix cond_ll,
            std::vector<TokenRecord> token_records = {});

  std::size_t size() const noexcept { return docs_.size(); }

  const std::string& id(std::size_t i) const { return docs_[i].id; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& text(std::size_t i) const { return docs_[i].text; }
  const std::optional<std::string>& pool(std::size_t i) const { return docs_[i].pool; }

  bool contains(const std::string& id) const { return index_.contains(id); }
  /// Throws ValidationError for unknown ids.
  std::size_t index_of(const std::string& id) const;

  const std::vector<double>& uncond_ll() const noexcept { return uncond_; }
  double uncond_ll(std::size_t j) const { return uncond_[j]; }
  const Matrix& cond_ll() const noexcept { return cond_; }
  double cond_ll(std::size_t prefix, std::size_t target) const { return cond_(prefix, target); }

  bool has_token_records() const noexcept { return !tokens_.empty(); }
  const std::vector<TokenRecord>& token_records() const noexcept { return tokens_; }
  /// nullptr when the document has no token record.
  const TokenRecord* token_record(const std::string& id) const;

  /// True when every document carries a ground-truth label.
  bool fully_labeled() const;

  /// Ground-truth labels. Only evaluation and label-using (oracle) methods
  /// may call this; label-free attacks never do. Throws
  /// MethodUnavailableError when any label is missing.
  Labels oracle_labels() const;

  /// Full documents including labels, for serialization.
  const std::vector<Document>& documents_with_labels() const noexcept { return docs_; }

  /// Copy of this archive with every label removed.
  LLArchive without_labels() const;

 private:
  std::vector<Document> docs_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> uncond_;
  Matrix cond_;
  std::vector<TokenRecord> tokens_;
  std::unordered_map<std::string, std::size_t> token_index_;
};

/// Reads and fully validates an archive directory (manifest.json, docs.jsonl,
/// uncond.f64, cond.f64, optional tokens.jsonl). Checksums are verified.
LLArchive load_archive(const std::filesystem::path& dir);

/// Writes an archive directory. Output is deterministic: saving the same
/// archive twice yields byte-identical files.
void save_archive(const LLArchive& archive, const std::filesystem::path& dir);

/// Parses only the labels from an archive's docs.jsonl (no matrix load).
Labels load_archive_labels(const std::filesystem::path& dir);

/// SHA-256 of the archive's manifest.json, which pins every blob checksum.
std::string archive_checksum(const std::filesystem::path& dir);

}  // namespace miaforge
