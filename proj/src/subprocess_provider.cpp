#include "miaforge/subprocess_provider.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <json.hpp>

#include "miaforge/error.hpp"

namespace miaforge {

namespace {

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

SubprocessProvider::SubprocessProvider(const std::string& command) {
  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw IoError(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = ::fork();
  if (pid_ < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  // a dead child must surface as an error, not kill us
  ::signal(SIGPIPE, SIG_IGN);

  std::string line;
  try {
    line = read_line();
  } catch (const IoError&) {
    throw CapabilityError("provider '" + command + "' exited before its handshake");
  }
  try {
    const auto j = nlohmann::json::parse(line);
    dynamic_ = j.at("capabilities").value("dynamic_prefix", false);
    if (j.contains("model")) model_ = j["model"].is_string() ? j["model"].get<std::string>() : j["model"].dump();
  } catch (const nlohmann::json::exception&) {
    throw CapabilityError("provider '" + command + "' sent a malformed handshake: " + line);
  }
  if (!dynamic_) {
    throw CapabilityError("provider '" + command + "' does not declare dynamic_prefix");
  }
}

SubprocessProvider::~SubprocessProvider() {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string SubprocessProvider::read_line() const {
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    const auto got = ::read(from_child_, chunk, sizeof chunk);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) throw IoError("provider closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

void SubprocessProvider::write_line(const std::string& line) const {
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto put = ::write(to_child_, data.data() + off, data.size() - off);
    if (put < 0 && errno == EINTR) continue;
    if (put <= 0) throw IoError("provider closed its input");
    off += static_cast<std::size_t>(put);
  }
}

double SubprocessProvider::conditional_ll(std::span<const std::string> prefix_ids,
                                          const std::string& target_id) const {
  std::lock_guard lock(mutex_);
  const auto req_id = next_id_++;
  nlohmann::json req;
  req["req_id"] = req_id;
  req["prefix_ids"] = std::vector<std::string>(prefix_ids.begin(), prefix_ids.end());
  req["target_id"] = target_id;
  write_line(req.dump());

  const auto line = read_line();
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw IoError("malformed provider response: " + line);
  }
  if (!resp.contains("req_id") || resp["req_id"] != req_id) {
    throw IoError("provider response out of sequence: " + line);
  }
  if (resp.contains("error")) {
    throw ValidationError("provider error for target '" + target_id +
                          "': " + (resp["error"].is_string() ? resp["error"].get<std::string>()
                                                             : resp["error"].dump()));
  }
  if (!resp.contains("ll") || !resp["ll"].is_number()) {
    throw IoError("provider response lacks ll: " + line);
  }
  const double ll = resp["ll"].get<double>();
  if (!std::isfinite(ll)) throw ValidationError("provider returned a non-finite ll");
  return ll;
}

}  // namespace miaforge
