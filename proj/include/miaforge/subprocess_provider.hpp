#pragma once

#include <cstdint>
#include <mutex>
#include <string>

#include "miaforge/provider.hpp"

namespace miaforge {

/// Dynamic provider speaking line-delimited JSON with a child process.
///
/// The child prints a handshake line
///   {"capabilities":{"dynamic_prefix":true},"model":...}
/// then answers each request
///   {"req_id":N,"prefix_ids":[...],"target_id":"..."}
/// with {"req_id":N,"ll":x} or {"req_id":N,"error":"..."}. Requests are
/// serialized; one is in flight at a time.
class SubprocessProvider final : public LlProvider {
 public:
  /// Runs `command` through /bin/sh. Throws CapabilityError when the
  /// handshake is missing or does not declare dynamic_prefix.
  explicit SubprocessProvider(const std::string& command);
  ~SubprocessProvider() override;

  SubprocessProvider(const SubprocessProvider&) = delete;
  SubprocessProvider& operator=(const SubprocessProvider&) = delete;

  ProviderCapabilities capabilities() const override { return {true, dynamic_}; }
  double conditional_ll(std::span<const std::string> prefix_ids,
                        const std::string& target_id) const override;

  const std::string& model() const noexcept { return model_; }

 private:
  std::string read_line() const;
  void write_line(const std::string& line) const;

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  bool dynamic_ = false;
  std::string model_;
  mutable std::string buffer_;
  mutable std::uint64_t next_id_ = 0;
  mutable std::mutex mutex_;
};

}  // namespace miaforge
