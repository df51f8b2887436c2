#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace miaforge::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Provenance record written next to every command's output.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  /// Canonical (key-sorted) configuration; hashed into config_hash.
  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_archive(const std::filesystem::path& dir);
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  std::optional<std::uint64_t> seed_;
  std::optional<std::string> archive_checksum_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
  std::string started_at_;
};

std::string utc_timestamp();

}  // namespace miaforge::cli
