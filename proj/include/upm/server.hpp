#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "upm/fileapi.hpp"
#include "upm/net.hpp"

// The file API over the frame protocol, one handle set per connection.
//
//   client HELLO                      -> HELLO "upm-serve/1"
//   CONTROL "open <path>"             -> CONTROL "ok"        handle key = device_id
//   REQUEST payload                   -> CONTROL "ok"        job_id = assigned job
//   CONTROL "read [timeout_ms]"       -> RESPONSE result     job_id = job read
//   CONTROL "flush" | "stat"          -> CONTROL "ok" | "pending=<n> submitted=<m>"
//   CONTROL "close"                   -> CONTROL "ok"
//   BYE                               -> BYE, connection closed
//
// Failures answer with ERROR "<VARIANT>[: detail]". A frame that cannot be
// decoded gets one ERROR frame and the connection is closed.
namespace upm {

inline constexpr std::string_view kServeHello = "upm-serve/1";

class Server {
public:
  Server(Runtime& runtime, const net::HostPort& listen,
         std::chrono::milliseconds default_read_timeout = std::chrono::milliseconds(60000));
  ~Server();

  std::uint16_t port() const { return port_; }
  // Accepts until request_stop(); then closes every connection.
  void run();
  // Async-signal-safe.
  void request_stop() noexcept { stop_.store(true); }

private:
  struct Connection {
    net::Fd fd;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void serve_connection(Connection& c);
  void reap(bool all);

  Runtime& runtime_;
  std::chrono::milliseconds read_timeout_;
  net::Fd listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::mutex mu_;
  std::list<std::unique_ptr<Connection>> connections_;
};

}  // namespace upm
