#include "upm/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <thread>

#include "upm/core_model.hpp"

extern char** environ;

namespace upm::net {

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(ErrorCode::BackendFailure, what + ": " + std::strerror(errno));
}

int poll_timeout_ms(Deadline deadline) {
  if (!deadline) return -1;
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left + 1, 1 << 30));
}

}  // namespace

void Fd::reset(int fd) {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void write_all(int fd, ByteView data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::BackendFailure, std::string("write: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool wait_readable(int fd, Deadline deadline) {
  for (;;) {
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, poll_timeout_ms(deadline));
    if (rc < 0) {
      if (errno == EINTR) continue;
      sys_fail("poll");
    }
    if (rc > 0) return true;
    if (deadline && Clock::now() >= *deadline) return false;
  }
}

bool read_exact(int fd, std::span<std::uint8_t> data, Deadline deadline) {
  std::size_t off = 0;
  while (off < data.size()) {
    if (deadline && !wait_readable(fd, deadline)) throw Error(ErrorCode::Timeout, "read");
    ssize_t n = ::read(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno != ECONNRESET) throw Error(ErrorCode::BackendFailure, std::string("read: ") + std::strerror(errno));
      n = 0;  // peer reset counts as EOF
    }
    if (n == 0) {
      if (off == 0) return false;
      throw Error(ErrorCode::ProtocolError, "truncated");
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<Frame> read_frame(int fd, Deadline deadline) {
  Bytes buf(kFramePrefixSize);
  if (!read_exact(fd, std::span(buf).first(kFrameMagic.size()), deadline)) return std::nullopt;
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), buf.begin()))
    throw Error(ErrorCode::ProtocolError, "magic");
  if (!read_exact(fd, std::span(buf).subspan(kFrameMagic.size()), deadline))
    throw Error(ErrorCode::ProtocolError, "truncated");

  const std::size_t dev_len = buf[14] | (std::size_t{buf[15]} << 8);
  buf.resize(kFramePrefixSize + dev_len + 4);
  if (!read_exact(fd, std::span(buf).subspan(kFramePrefixSize), deadline))
    throw Error(ErrorCode::ProtocolError, "truncated");
  const std::size_t total = frame_length_hint(buf);
  const std::size_t have = buf.size();
  buf.resize(total);
  if (!read_exact(fd, std::span(buf).subspan(have), deadline)) throw Error(ErrorCode::ProtocolError, "truncated");
  return decode_frame(buf).frame;
}

void write_frame(int fd, const Frame& f) { write_all(fd, encode_frame(f)); }

HostPort parse_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error(ErrorCode::ProtocolError, "address");
  HostPort hp;
  hp.host = address.substr(0, colon);
  if (hp.host.size() >= 2 && hp.host.front() == '[' && hp.host.back() == ']') hp.host = hp.host.substr(1, hp.host.size() - 2);
  try {
    const auto port = std::stoul(address.substr(colon + 1));
    if (port > 65535) throw std::out_of_range("port");
    hp.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ProtocolError, "address");
  }
  return hp;
}

namespace {

addrinfo* resolve(const HostPort& where, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto port = std::to_string(where.port);
  const int rc = ::getaddrinfo(where.host.empty() ? nullptr : where.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw Error(ErrorCode::BackendFailure, "resolve " + where.host + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace

Fd tcp_listen(const HostPort& where, int backlog) {
  addrinfo* res = resolve(where, true);
  Fd fd;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    Fd s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!s) continue;
    int one = 1;
    ::setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.get(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.get(), backlog) == 0) {
      fd = std::move(s);
      break;
    }
  }
  ::freeaddrinfo(res);
  if (!fd) sys_fail("listen on " + where.host + ":" + std::to_string(where.port));
  return fd;
}

std::uint16_t local_port(int fd) {
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len) != 0) sys_fail("getsockname");
  if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  return 0;
}

Fd tcp_connect(const HostPort& where, Deadline deadline) {
  for (;;) {
    addrinfo* res = resolve(where, false);
    Fd fd;
    for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
      Fd s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
      if (!s) continue;
      if (::connect(s.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
        int one = 1;
        ::setsockopt(s.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        fd = std::move(s);
        break;
      }
    }
    ::freeaddrinfo(res);
    if (fd) return fd;
    // the peer may still be starting up; retry until the deadline
    if (!deadline || Clock::now() >= *deadline)
      throw Error(ErrorCode::BackendFailure, "connect " + where.host + ":" + std::to_string(where.port) + " refused");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

Fd unix_listen(const std::string& path, int backlog) {
  sockaddr_un addr{};
  if (path.size() >= sizeof addr.sun_path) throw Error(ErrorCode::BackendFailure, "socket path too long: " + path);
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  Fd s(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) sys_fail("socket");
  if (::bind(s.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) sys_fail("bind " + path);
  if (::listen(s.get(), backlog) != 0) sys_fail("listen " + path);
  return s;
}

Fd unix_connect(const std::string& path) {
  sockaddr_un addr{};
  if (path.size() >= sizeof addr.sun_path) throw Error(ErrorCode::BackendFailure, "socket path too long: " + path);
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  Fd s(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) sys_fail("socket");
  if (::connect(s.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) sys_fail("connect " + path);
  return s;
}

Fd accept_one(int listen_fd, Deadline deadline) {
  for (;;) {
    if (!wait_readable(listen_fd, deadline)) throw Error(ErrorCode::Timeout, "accept");
    Fd c(::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC));
    if (c) return c;
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) continue;
    sys_fail("accept");
  }
}

TempDir::TempDir(const std::string& prefix) {
  std::string tmpl = (std::filesystem::temp_directory_path() / (prefix + "-XXXXXX")).string();
  if (::mkdtemp(tmpl.data()) == nullptr) sys_fail("mkdtemp");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Child::Child(Child&& o) noexcept
    : pid_(std::exchange(o.pid_, -1)), to_child_(std::move(o.to_child_)), from_child_(std::move(o.from_child_)) {}

Child& Child::operator=(Child&& o) noexcept {
  if (this != &o) {
    if (pid_ > 0) terminate(std::chrono::milliseconds(0));
    pid_ = std::exchange(o.pid_, -1);
    to_child_ = std::move(o.to_child_);
    from_child_ = std::move(o.from_child_);
  }
  return *this;
}

Child::~Child() {
  if (pid_ > 0) terminate(std::chrono::milliseconds(200));
}

Child Child::spawn(const std::vector<std::string>& argv, bool with_pipes) {
  if (argv.empty()) throw Error(ErrorCode::BackendFailure, "empty command");
  ignore_sigpipe();

  int in_pipe[2] = {-1, -1};
  int out_pipe[2] = {-1, -1};
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  if (with_pipes) {
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) sys_fail("pipe");
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], 0);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);
  }

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);

  Child child;
  if (with_pipes) {
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    child.to_child_.reset(in_pipe[1]);
    child.from_child_.reset(out_pipe[0]);
  }
  if (rc != 0) throw Error(ErrorCode::BackendFailure, "spawn " + argv[0] + ": " + std::strerror(rc));
  child.pid_ = pid;
  return child;
}

bool Child::running() {
  if (pid_ <= 0) return false;
  int status = 0;
  const pid_t r = ::waitpid(pid_, &status, WNOHANG);
  if (r == pid_) {
    pid_ = -1;
    return false;
  }
  return r == 0;
}

int Child::terminate(std::chrono::milliseconds grace) {
  if (pid_ <= 0) return 0;
  to_child_.reset();
  int status = 0;
  const auto until = Clock::now() + grace;
  for (;;) {
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || r < 0) break;
    if (Clock::now() >= until) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  pid_ = -1;
  return status;
}

}  // namespace upm::net
