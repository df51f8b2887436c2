#include "run_manifest.hpp"

#include <chrono>
#include <ctime>

#include "miaforge/archive.hpp"
#include "miaforge/checksum.hpp"
#include "io_util.hpp"

namespace miaforge::cli {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_at_(utc_timestamp()) {}

void RunManifest::set_archive(const std::filesystem::path& dir) {
  archive_checksum_ = archive_checksum(dir);
}

void RunManifest::write(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["tool"] = "mia-forge";
  j["version"] = kVersion;
  j["command"] = command_;
  j["argv"] = argv_;
  j["config"] = config_;
  j["config_hash"] = sha256_hex(config_.dump());
  j["archive_checksum"] = archive_checksum_ ? nlohmann::ordered_json(*archive_checksum_) : nullptr;
  j["seed"] = seed_ ? nlohmann::ordered_json(*seed_) : nullptr;
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  j["started_at"] = started_at_;
  j["finished_at"] = utc_timestamp();
  detail::write_file(path, j.dump(2) + "\n");
}

}  // namespace miaforge::cli
