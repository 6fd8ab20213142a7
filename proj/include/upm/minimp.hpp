#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "upm/bytes.hpp"
#include "upm/net.hpp"

// MiniMP: the message-passing layer inside a CLUSTER device. Ranks are
// separate processes, each holding one stream connection to the router that
// lives in the owning backend; the router forwards rank-to-rank traffic and
// exchanges jobs with the host (rank kHost). Ordering guarantee: messages
// between a fixed (src, dst, tag) arrive in send order.
//
// Wire: framing frames. REQUEST payload = [src i32][dst i32][tag u32][data];
// HELLO payload = [rank i32]; CONTROL "barrier" (rank -> router) and
// "release" (router -> rank); BYE asks a rank to exit.
namespace upm::mp {

inline constexpr int kHost = -1;

struct Message {
  int src = 0;
  int dst = 0;
  std::uint32_t tag = 0;
  Bytes data;
};

Bytes encode_message(const Message& m);
Message decode_message(ByteView payload);

// Process-wide log of transport connections, "from -> to". Every rank
// connection and every host attachment is recorded at the router that
// accepts it.
class ConnectionLog {
public:
  struct Entry {
    std::string from;
    std::string to;
  };
  static ConnectionLog& global();
  void record(std::string from, std::string to);
  std::vector<Entry> entries() const;
  void clear();

private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

// Cluster-id component of a log endpoint name ("<cluster>/rank3" -> "<cluster>").
std::string cluster_of(const std::string& endpoint);

class Router {
public:
  using HostHandler = std::function<void(Message)>;
  using FailureHandler = std::function<void(const std::string&)>;

  // Creates the listening socket; ranks connect to socket_path().
  Router(std::string cluster_id, int size, HostHandler on_host, FailureHandler on_failure);
  Router(const Router&) = delete;
  Router& operator=(const Router&) = delete;
  ~Router();

  const std::string& socket_path() const { return socket_path_; }
  const std::string& cluster_id() const { return cluster_id_; }
  int size() const { return size_; }

  // Blocks until every rank has connected and identified itself; then starts forwarding.
  void accept_all(net::Deadline deadline);

  void send_from_host(int dst, std::uint32_t tag, ByteView data);

  // Sends BYE to every rank and stops forwarding. Idempotent.
  void shutdown();

private:
  struct Link {
    net::Fd fd;
    std::mutex write_mu;
  };

  void forward(const Message& m);
  void reader_loop(int rank);
  void send_to_rank(int rank, const Frame& f);
  void enter_barrier();

  std::string cluster_id_;
  int size_;
  HostHandler on_host_;
  FailureHandler on_failure_;
  net::TempDir dir_;
  std::string socket_path_;
  net::Fd listener_;
  std::vector<std::unique_ptr<Link>> links_;
  std::vector<std::thread> readers_;
  std::mutex barrier_mu_;
  int barrier_count_ = 0;
  std::atomic<bool> stopping_{false};
};

// Rank-side endpoint (one per rank process; single owner).
class Endpoint {
public:
  static Endpoint connect(const std::string& socket_path, int rank, int size);

  int rank() const { return rank_; }
  int size() const { return size_; }

  void send(int dst, std::uint32_t tag, ByteView data);
  // Blocks for the next message from (src, tag), buffering others. Returns
  // nullopt if the router closed the connection or asked this rank to exit.
  std::optional<Bytes> recv(int src, std::uint32_t tag);
  // Returns once every rank has entered. false if the connection closed.
  bool barrier();

private:
  Endpoint(net::Fd fd, int rank, int size) : fd_(std::move(fd)), rank_(rank), size_(size) {}
  // Reads one frame; buffers data messages. false on EOF/BYE.
  bool pump(bool* released);

  net::Fd fd_;
  int rank_;
  int size_;
  bool closed_ = false;
  std::map<std::pair<int, std::uint32_t>, std::deque<Bytes>> inbox_;
};

}  // namespace upm::mp
