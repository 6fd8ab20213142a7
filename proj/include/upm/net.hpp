#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "upm/bytes.hpp"
#include "upm/framing.hpp"

// POSIX plumbing shared by the plug-in transport, the cluster router and the
// served runtime: owned descriptors, framed socket IO and child processes.
namespace upm::net {

using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

inline Deadline deadline_after(std::optional<std::chrono::milliseconds> timeout) {
  if (!timeout) return std::nullopt;
  return Clock::now() + *timeout;
}

class Fd {
public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) reset(std::exchange(o.fd_, -1));
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset(int fd = -1);
  int release() { return std::exchange(fd_, -1); }

private:
  int fd_ = -1;
};

// Makes writes to closed pipes/sockets report EPIPE instead of killing the process.
void ignore_sigpipe();

void write_all(int fd, ByteView data);

// Reads exactly data.size() bytes. Returns false on EOF before the first byte;
// throws PROTOCOL_ERROR("truncated") on EOF after a partial read and TIMEOUT
// when the deadline passes.
bool read_exact(int fd, std::span<std::uint8_t> data, Deadline deadline = std::nullopt);

// One frame off a stream. nullopt on clean EOF at a frame boundary.
std::optional<Frame> read_frame(int fd, Deadline deadline = std::nullopt);
void write_frame(int fd, const Frame& f);

// Waits for readability. false on timeout.
bool wait_readable(int fd, Deadline deadline);

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};
HostPort parse_host_port(const std::string& address);  // throws PROTOCOL_ERROR("address")

// Listening TCP socket; port 0 picks an ephemeral port, reported by local_port().
Fd tcp_listen(const HostPort& where, int backlog = 64);
std::uint16_t local_port(int fd);
Fd tcp_connect(const HostPort& where, Deadline deadline);

Fd unix_listen(const std::string& path, int backlog = 64);
Fd unix_connect(const std::string& path);

// Blocking accept honouring a deadline; throws TIMEOUT.
Fd accept_one(int listen_fd, Deadline deadline);

// Scratch directory removed (recursively) on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& prefix = "upm");
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir();
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

// A spawned child process. With pipes, `to_child` is its stdin and
// `from_child` its stdout; stderr is inherited.
class Child {
public:
  Child() = default;
  Child(Child&& o) noexcept;
  Child& operator=(Child&& o) noexcept;
  ~Child();

  static Child spawn(const std::vector<std::string>& argv, bool with_pipes);

  pid_t pid() const { return pid_; }
  int to_child() const { return to_child_.get(); }
  int from_child() const { return from_child_.get(); }
  void close_stdin() { to_child_.reset(); }

  // Waits up to `grace` for exit, then SIGKILLs. Returns the wait status.
  int terminate(std::chrono::milliseconds grace);
  bool running();

private:
  pid_t pid_ = -1;
  Fd to_child_;
  Fd from_child_;
};

}  // namespace upm::net
