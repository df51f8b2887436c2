#include "miaforge/archive.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "io_util.hpp"
#include "miaforge/checksum.hpp"
#include "miaforge/error.hpp"
#include "miaforge/provider.hpp"

namespace miaforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "mia-forge-archive";
constexpr int kVersion = 1;
constexpr const char* kDocsBlob = "docs.jsonl";
constexpr const char* kUncondBlob = "uncond.f64";
constexpr const char* kCondBlob = "cond.f64";
constexpr const char* kTokensBlob = "tokens.jsonl";

void check_finite_seq(const std::vector<double>& values, const std::string& what,
                      const std::string& doc_id) {
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (!std::isfinite(values[t])) {
      throw ValidationError(what + "[" + std::to_string(t) + "] of document '" + doc_id +
                            "' is not finite");
    }
  }
}

void validate_token_record(const TokenRecord& rec) {
  const auto len = rec.token_logprobs.size();
  if (len == 0) {
    throw ValidationError("token record of '" + rec.doc_id + "' has no tokens");
  }
  if (rec.mu.size() != len || rec.sigma.size() != len ||
      (rec.ref_logprobs && rec.ref_logprobs->size() != len)) {
    throw ValidationError("token record of '" + rec.doc_id +
                          "' has sequences of different lengths");
  }
  check_finite_seq(rec.token_logprobs, "token_logprobs", rec.doc_id);
  check_finite_seq(rec.mu, "mu", rec.doc_id);
  check_finite_seq(rec.sigma, "sigma", rec.doc_id);
  if (rec.ref_logprobs) check_finite_seq(*rec.ref_logprobs, "ref_logprobs", rec.doc_id);
  for (std::size_t t = 0; t < len; ++t) {
    if (rec.sigma[t] < 0.0) {
      throw ValidationError("sigma[" + std::to_string(t) + "] of document '" + rec.doc_id +
                            "' is negative");
    }
  }
  if (rec.zlib_bytes <= 0) {
    throw ValidationError("zlib_bytes of document '" + rec.doc_id + "' must be positive");
  }
}

ordered_json doc_to_json(const Document& d) {
  ordered_json j;
  j["id"] = d.id;
  j["text"] = d.text;
  j["label"] = d.label ? ordered_json(*d.label) : ordered_json(nullptr);
  j["pool"] = d.pool ? ordered_json(*d.pool) : ordered_json(nullptr);
  return j;
}

Document doc_from_json(const json& j, std::size_t line) {
  const auto where = " (docs.jsonl line " + std::to_string(line + 1) + ")";
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("text") ||
      !j["text"].is_string()) {
    throw ValidationError("document record needs string fields id and text" + where);
  }
  Document d;
  d.id = j["id"].get<std::string>();
  d.text = j["text"].get<std::string>();
  if (j.contains("label") && !j["label"].is_null()) {
    const auto& l = j["label"];
    if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1)) {
      throw ValidationError("label of '" + d.id + "' must be 0, 1 or null" + where);
    }
    d.label = l.get<int>();
  }
  if (j.contains("pool") && !j["pool"].is_null()) {
    if (!j["pool"].is_string()) {
      throw ValidationError("pool of '" + d.id + "' must be a string or null" + where);
    }
    d.pool = j["pool"].get<std::string>();
  }
  return d;
}

ordered_json token_to_json(const TokenRecord& r) {
  ordered_json j;
  j["doc_id"] = r.doc_id;
  j["token_logprobs"] = r.token_logprobs;
  j["mu"] = r.mu;
  j["sigma"] = r.sigma;
  j["ref_logprobs"] = r.ref_logprobs ? ordered_json(*r.ref_logprobs) : ordered_json(nullptr);
  j["zlib_bytes"] = r.zlib_bytes;
  return j;
}

std::vector<double> number_array(const json& j, const char* field, const std::string& doc_id) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw ValidationError(std::string("token record of '") + doc_id + "' lacks array " + field);
  }
  std::vector<double> out;
  out.reserve(j[field].size());
  for (const auto& v : j[field]) {
    if (!v.is_number()) {
      throw ValidationError(std::string(field) + " of '" + doc_id + "' contains a non-number");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

TokenRecord token_from_json(const json& j, std::size_t line) {
  if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string()) {
    throw ValidationError("token record needs a string doc_id (tokens.jsonl line " +
                          std::to_string(line + 1) + ")");
  }
  TokenRecord r;
  r.doc_id = j["doc_id"].get<std::string>();
  r.token_logprobs = number_array(j, "token_logprobs", r.doc_id);
  r.mu = number_array(j, "mu", r.doc_id);
  r.sigma = number_array(j, "sigma", r.doc_id);
  if (j.contains("ref_logprobs") && !j["ref_logprobs"].is_null()) {
    r.ref_logprobs = number_array(j, "ref_logprobs", r.doc_id);
  }
  if (!j.contains("zlib_bytes") || !j["zlib_bytes"].is_number_integer()) {
    throw ValidationError("token record of '" + r.doc_id + "' lacks integer zlib_bytes");
  }
  r.zlib_bytes = j["zlib_bytes"].get<std::int64_t>();
  return r;
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in " + where + ": " + e.what());
  }
}

}  // namespace

LLArchive::LLArchive(std::vector<Document> docs, std::vector<double> uncond_ll, Matrix cond_ll,
                     std::vector<TokenRecord> token_records)
    : docs_(std::move(docs)),
      uncond_(std::move(uncond_ll)),
      cond_(std::move(cond_ll)),
      tokens_(std::move(token_records)) {
  const auto n = docs_.size();
  if (n == 0) throw ValidationError("archive has no documents");
  ids_.reserve(n);
  index_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = docs_[i];
    if (d.id.empty()) throw ValidationError("document at index " + std::to_string(i) + " has an empty id");
    if (d.text.empty()) throw ValidationError("document '" + d.id + "' has empty text");
    if (d.label && *d.label != 0 && *d.label != 1) {
      throw ValidationError("label of '" + d.id + "' must be 0 or 1");
    }
    if (!index_.emplace(d.id, i).second) {
      throw ValidationError("duplicate document id '" + d.id + "' at index " + std::to_string(i));
    }
    ids_.push_back(d.id);
  }
  if (uncond_.size() != n) {
    throw ValidationError("uncond_ll has " + std::to_string(uncond_.size()) +
                          " values for " + std::to_string(n) + " documents");
  }
  if (cond_.rows() != n || cond_.cols() != n) {
    throw ValidationError("cond_ll dimension mismatch: " + std::to_string(cond_.rows()) + "x" +
                          std::to_string(cond_.cols()) + " matrix for " + std::to_string(n) +
                          " documents");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(uncond_[j])) {
      throw ValidationError("uncond_ll[" + std::to_string(j) + "] ('" + ids_[j] +
                            "') is not finite");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(cond_(i, j))) {
        throw ValidationError("cond_ll cell (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") is not finite");
      }
    }
  }
  token_index_.reserve(tokens_.size());
  for (std::size_t k = 0; k < tokens_.size(); ++k) {
    const auto& rec = tokens_[k];
    if (!index_.contains(rec.doc_id)) {
      throw ValidationError("token record for unknown document '" + rec.doc_id + "'");
    }
    if (!token_index_.emplace(rec.doc_id, k).second) {
      throw ValidationError("duplicate token record for document '" + rec.doc_id + "'");
    }
    validate_token_record(rec);
  }
}

std::size_t LLArchive::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown document id '" + id + "'");
  return it->second;
}

const TokenRecord* LLArchive::token_record(const std::string& id) const {
  auto it = token_index_.find(id);
  return it == token_index_.end() ? nullptr : &tokens_[it->second];
}

bool LLArchive::fully_labeled() const {
  for (const auto& d : docs_) {
    if (!d.label) return false;
  }
  return true;
}

Labels LLArchive::oracle_labels() const {
  Labels out;
  out.ids.reserve(size());
  out.values.reserve(size());
  std::vector<std::string> missing;
  for (const auto& d : docs_) {
    if (!d.label) {
      missing.push_back(d.id);
      continue;
    }
    out.ids.push_back(d.id);
    out.values.push_back(*d.label);
  }
  if (!missing.empty()) {
    throw MethodUnavailableError("ground-truth labels required but missing for " +
                                 std::to_string(missing.size()) + " documents (first: '" +
                                 missing.front() + "')");
  }
  return out;
}

LLArchive LLArchive::without_labels() const {
  auto docs = docs_;
  for (auto& d : docs) d.label.reset();
  return LLArchive(std::move(docs), uncond_, cond_, tokens_);
}

void save_archive(const LLArchive& archive, const fs::path& dir) {
  detail::ensure_directory(dir);
  const auto n = archive.size();

  std::string docs;
  for (const auto& d : archive.documents_with_labels()) {
    docs += doc_to_json(d).dump();
    docs += '\n';
  }
  const auto uncond = detail::encode_le(archive.uncond_ll());
  const auto cond = detail::encode_le(archive.cond_ll().data());
  std::string tokens;
  for (const auto& r : archive.token_records()) {
    tokens += token_to_json(r).dump();
    tokens += '\n';
  }

  ordered_json blobs;
  auto add_blob = [&](const char* name, const std::string& bytes) {
    blobs[name] = {{"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}};
    detail::write_file(dir / name, bytes);
  };
  add_blob(kDocsBlob, docs);
  add_blob(kUncondBlob, uncond);
  add_blob(kCondBlob, cond);
  if (archive.has_token_records()) {
    add_blob(kTokensBlob, tokens);
  } else {
    std::error_code ec;
    fs::remove(dir / kTokensBlob, ec);
  }

  ordered_json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["n"] = n;
  manifest["doc_ids"] = archive.ids();
  manifest["ll_base"] = "nats";
  manifest["ll_unit"] = "mean log-likelihood per target token";
  manifest["cond_layout"] = "row-major, row = prefix index, column = target index";
  manifest["diagonal"] = "self-conditioned";
  manifest["capabilities"] = {{"pairwise", true}, {"dynamic_prefix", false}};
  manifest["has_token_records"] = archive.has_token_records();
  manifest["blobs"] = blobs;
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

struct Manifest {
  std::size_t n = 0;
  std::vector<std::string> doc_ids;
  bool has_tokens = false;
  json blobs;
};

Manifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw ValidationError("missing manifest.json in " + dir.string());
  const auto j = parse_json(detail::read_file(path), "manifest.json");
  if (!j.is_object() || j.value("format", "") != kFormat) {
    throw ValidationError("manifest.json is not a mia-forge archive manifest");
  }
  if (j.value("version", 0) != kVersion) {
    throw ValidationError("unsupported archive version " + j.value("version", json()).dump());
  }
  if (j.value("ll_base", "") != "nats") {
    throw ValidationError("archive ll_base must be \"nats\", got " +
                          j.value("ll_base", json()).dump());
  }
  Manifest m;
  if (!j.contains("n") || !j["n"].is_number_unsigned()) {
    throw ValidationError("manifest.json lacks document count n");
  }
  m.n = j["n"].get<std::size_t>();
  if (!j.contains("doc_ids") || !j["doc_ids"].is_array()) {
    throw ValidationError("manifest.json lacks doc_ids");
  }
  for (const auto& id : j["doc_ids"]) {
    if (!id.is_string()) throw ValidationError("manifest doc_ids must be strings");
    m.doc_ids.push_back(id.get<std::string>());
  }
  if (m.doc_ids.size() != m.n) {
    throw ValidationError("manifest lists " + std::to_string(m.doc_ids.size()) +
                          " doc_ids but n = " + std::to_string(m.n));
  }
  if (j.contains("capabilities") && !j["capabilities"].value("pairwise", true)) {
    throw ValidationError("archive capabilities must include pairwise");
  }
  m.has_tokens = j.value("has_token_records", false);
  if (!j.contains("blobs") || !j["blobs"].is_object()) {
    throw ValidationError("manifest.json lacks blob checksums");
  }
  m.blobs = j["blobs"];
  return m;
}

std::string read_blob(const fs::path& dir, const Manifest& m, const char* name) {
  if (!m.blobs.contains(name)) {
    throw ValidationError(std::string("manifest has no checksum for ") + name);
  }
  const auto path = dir / name;
  if (!fs::exists(path)) throw ValidationError(std::string("missing blob ") + name);
  auto bytes = detail::read_file(path);
  const auto expected = m.blobs[name].value("sha256", "");
  if (sha256_hex(bytes) != expected) {
    throw ValidationError(std::string("checksum mismatch for ") + name);
  }
  return bytes;
}

std::vector<Document> parse_docs(const std::string& bytes) {
  std::vector<Document> docs;
  const auto lines = detail::split_lines(bytes);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    docs.push_back(doc_from_json(parse_json(lines[i], "docs.jsonl"), i));
  }
  return docs;
}

}  // namespace

LLArchive load_archive(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("archive directory not found: " + dir.string());
  const auto m = read_manifest(dir);
  auto docs = parse_docs(read_blob(dir, m, kDocsBlob));
  if (docs.size() != m.n) {
    throw ValidationError("docs.jsonl has " + std::to_string(docs.size()) +
                          " documents but manifest n = " + std::to_string(m.n));
  }
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].id != m.doc_ids[i]) {
      throw ValidationError("document order mismatch at index " + std::to_string(i) + ": '" +
                            docs[i].id + "' in docs.jsonl vs '" + m.doc_ids[i] +
                            "' in manifest");
    }
  }

  const auto uncond_bytes = read_blob(dir, m, kUncondBlob);
  if (uncond_bytes.size() != m.n * 8) {
    throw ValidationError("uncond.f64 holds " + std::to_string(uncond_bytes.size()) +
                          " bytes, expected " + std::to_string(m.n * 8) + " for N = " +
                          std::to_string(m.n));
  }
  const auto cond_bytes = read_blob(dir, m, kCondBlob);
  if (cond_bytes.size() != m.n * m.n * 8) {
    throw ValidationError("cond.f64 dimension mismatch: " + std::to_string(cond_bytes.size()) +
                          " bytes, expected " + std::to_string(m.n * m.n * 8) + " for " +
                          std::to_string(m.n) + "x" + std::to_string(m.n));
  }

  std::vector<TokenRecord> tokens;
  if (m.has_tokens) {
    const auto lines = detail::split_lines(read_blob(dir, m, kTokensBlob));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      tokens.push_back(token_from_json(parse_json(lines[i], "tokens.jsonl"), i));
    }
  }

  return LLArchive(std::move(docs), detail::decode_le<double>(uncond_bytes),
                   Matrix(m.n, m.n, detail::decode_le<double>(cond_bytes)), std::move(tokens));
}

Labels load_archive_labels(const fs::path& dir) {
  const auto m = read_manifest(dir);
  const auto docs = parse_docs(read_blob(dir, m, kDocsBlob));
  Labels out;
  for (const auto& d : docs) {
    if (!d.label) {
      throw MethodUnavailableError("document '" + d.id + "' has no ground-truth label");
    }
    out.ids.push_back(d.id);
    out.values.push_back(*d.label);
  }
  return out;
}

std::string archive_checksum(const fs::path& dir) {
  return sha256_hex(detail::read_file(dir / "manifest.json"));
}

double query_cond(const LLArchive& archive, const LlProvider* provider,
                  std::span<const std::string> prefix_ids, const std::string& target_id) {
  const auto target = archive.index_of(target_id);
  if (prefix_ids.empty()) return archive.uncond_ll(target);
  if (prefix_ids.size() == 1) return archive.cond_ll(archive.index_of(prefix_ids[0]), target);
  for (const auto& p : prefix_ids) archive.index_of(p);
  if (provider == nullptr || !provider->capabilities().dynamic_prefix) {
    throw CapabilityError("concatenated-prefix query (" + std::to_string(prefix_ids.size()) +
                          " prefixes) needs a dynamic_prefix provider; the archive alone "
                          "only answers single-prefix queries");
  }
  return provider->conditional_ll(prefix_ids, target_id);
}

}  // namespace miaforge
