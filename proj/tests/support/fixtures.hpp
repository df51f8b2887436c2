#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>
#include <string>
#include <unistd.h>

#include "miaforge/archive.hpp"
#include "miaforge/checksum.hpp"

namespace fixture {

/// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("miaforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

/// Replaces a blob and re-pins its checksum so the loader reaches the
/// content checks.
inline void rewrite_blob(const std::filesystem::path& dir, const std::string& name,
                         const std::string& bytes) {
  spit(dir / name, bytes);
  auto m = nlohmann::ordered_json::parse(slurp(dir / "manifest.json"));
  m["blobs"][name]["sha256"] = miaforge::sha256_hex(bytes);
  m["blobs"][name]["bytes"] = bytes.size();
  spit(dir / "manifest.json", m.dump(2) + "\n");
}

inline void edit_manifest(const std::filesystem::path& dir,
                          const std::function<void(nlohmann::ordered_json&)>& edit) {
  auto m = nlohmann::ordered_json::parse(slurp(dir / "manifest.json"));
  edit(m);
  spit(dir / "manifest.json", m.dump(2) + "\n");
}

/// Small hand-built archive: cond(i, j) = uncond[j] * ratio(i, j).
inline miaforge::LLArchive tiny_archive(std::size_t n = 4, bool labels = true, bool tokens = true) {
  std::vector<miaforge::Document> docs;
  std::vector<double> uncond;
  std::vector<miaforge::TokenRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "d" + std::to_string(i);
    docs.push_back({id, "text of " + id, labels ? std::optional<int>(static_cast<int>(i % 2)) : std::nullopt,
                    std::nullopt});
    uncond.push_back(-2.0 - 0.5 * static_cast<double>(i));
    if (tokens) {
      miaforge::TokenRecord r;
      r.doc_id = id;
      r.token_logprobs = {uncond.back() - 0.5, uncond.back() + 0.5};
      r.mu = {-1.0, -2.0};
      r.sigma = {1.0, 0.5};
      r.ref_logprobs = std::vector<double>{-2.0, -2.0};
      r.zlib_bytes = 10 + static_cast<std::int64_t>(i);
      recs.push_back(r);
    }
  }
  miaforge::Matrix cond(n, n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t x = 0; x < n; ++x) {
      cond(p, x) = uncond[x] * (1.0 + 0.1 * static_cast<double>((p + 2 * x) % 3));
    }
  }
  return miaforge::LLArchive(std::move(docs), std::move(uncond), std::move(cond), std::move(recs));
}

}  // namespace fixture
