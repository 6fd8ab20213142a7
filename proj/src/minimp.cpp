#include "upm/minimp.hpp"

#include <sys/socket.h>

#include <stdexcept>

#include "upm/core_model.hpp"

namespace upm::mp {

namespace {

const Bytes kBarrier = to_bytes("barrier");
const Bytes kRelease = to_bytes("release");

std::string rank_name(const std::string& cluster, int rank) {
  return rank == kHost ? std::string("host") : cluster + "/rank" + std::to_string(rank);
}

}  // namespace

Bytes encode_message(const Message& m) {
  ByteWriter w(12 + m.data.size());
  w.i32(m.src).i32(m.dst).u32(m.tag).raw(m.data);
  return std::move(w).take();
}

Message decode_message(ByteView payload) {
  ByteReader r(payload);
  Message m;
  try {
    m.src = r.i32();
    m.dst = r.i32();
    m.tag = r.u32();
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::ProtocolError, "short mp message");
  }
  auto rest = r.rest();
  m.data.assign(rest.begin(), rest.end());
  return m;
}

ConnectionLog& ConnectionLog::global() {
  static ConnectionLog log;
  return log;
}

void ConnectionLog::record(std::string from, std::string to) {
  std::lock_guard lock(mu_);
  entries_.push_back({std::move(from), std::move(to)});
}

std::vector<ConnectionLog::Entry> ConnectionLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

void ConnectionLog::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

std::string cluster_of(const std::string& endpoint) {
  const auto slash = endpoint.rfind('/');
  return slash == std::string::npos ? endpoint : endpoint.substr(0, slash);
}

// ---------------------------------------------------------------------------
// Router
// ---------------------------------------------------------------------------

Router::Router(std::string cluster_id, int size, HostHandler on_host, FailureHandler on_failure)
    : cluster_id_(std::move(cluster_id)),
      size_(size),
      on_host_(std::move(on_host)),
      on_failure_(std::move(on_failure)),
      dir_("upm-mp") {
  if (size_ < 1) throw Error(ErrorCode::InvalidManifest, "ranks");
  net::ignore_sigpipe();
  socket_path_ = dir_.path() + "/router.sock";
  listener_ = net::unix_listen(socket_path_);
  ConnectionLog::global().record("host", cluster_id_ + "/router");
}

Router::~Router() { shutdown(); }

void Router::accept_all(net::Deadline deadline) {
  std::vector<std::unique_ptr<Link>> links(size_);
  for (int accepted = 0; accepted < size_; ++accepted) {
    net::Fd conn = net::accept_one(listener_.get(), deadline);
    auto hello = net::read_frame(conn.get(), deadline);
    if (!hello || hello->kind != FrameKind::Hello || hello->payload.size() != 4)
      throw Error(ErrorCode::ProtocolError, "rank hello");
    const int rank = ByteReader(hello->payload).i32();
    if (rank < 0 || rank >= size_ || links[rank]) throw Error(ErrorCode::ProtocolError, "rank id " + std::to_string(rank));
    links[rank] = std::make_unique<Link>();
    links[rank]->fd = std::move(conn);
    ConnectionLog::global().record(rank_name(cluster_id_, rank), cluster_id_ + "/router");
  }
  listener_.reset();
  links_ = std::move(links);
  for (int r = 0; r < size_; ++r) readers_.emplace_back([this, r] { reader_loop(r); });
}

void Router::send_to_rank(int rank, const Frame& f) {
  if (rank < 0 || rank >= static_cast<int>(links_.size())) throw Error(ErrorCode::BackendFailure, "no rank " + std::to_string(rank));
  auto& link = *links_[rank];
  std::lock_guard lock(link.write_mu);
  net::write_frame(link.fd.get(), f);
}

void Router::send_from_host(int dst, std::uint32_t tag, ByteView data) {
  if (stopping_) throw Error(ErrorCode::DeviceClosed);
  Message m{kHost, dst, tag, Bytes(data.begin(), data.end())};
  Frame f;
  f.kind = FrameKind::Request;
  f.payload = encode_message(m);
  send_to_rank(dst, f);
}

void Router::forward(const Message& m) {
  if (m.dst == kHost) {
    on_host_(m);
    return;
  }
  Frame f;
  f.kind = FrameKind::Request;
  f.payload = encode_message(m);
  send_to_rank(m.dst, f);
}

void Router::enter_barrier() {
  std::lock_guard lock(barrier_mu_);
  if (++barrier_count_ < size_) return;
  barrier_count_ = 0;
  Frame release;
  release.kind = FrameKind::Control;
  release.payload = kRelease;
  for (int r = 0; r < size_; ++r) send_to_rank(r, release);
}

void Router::reader_loop(int rank) {
  const int fd = links_[rank]->fd.get();
  try {
    for (;;) {
      auto frame = net::read_frame(fd);
      if (!frame || frame->kind == FrameKind::Bye) break;
      if (frame->kind == FrameKind::Control && frame->payload == kBarrier) {
        enter_barrier();
      } else if (frame->kind == FrameKind::Request) {
        auto m = decode_message(frame->payload);
        m.src = rank;  // ranks cannot spoof their identity
        forward(m);
      }
    }
  } catch (const std::exception& e) {
    if (!stopping_) on_failure_("rank " + std::to_string(rank) + ": " + e.what());
    return;
  }
  if (!stopping_) on_failure_("rank " + std::to_string(rank) + " exited");
}

void Router::shutdown() {
  if (stopping_.exchange(true)) return;
  Frame bye;
  bye.kind = FrameKind::Bye;
  for (auto& link : links_) {
    if (!link) continue;
    try {
      std::lock_guard lock(link->write_mu);
      net::write_frame(link->fd.get(), bye);
    } catch (const std::exception&) {
    }
    ::shutdown(link->fd.get(), SHUT_RDWR);
  }
  for (auto& t : readers_)
    if (t.joinable()) t.join();
}

// ---------------------------------------------------------------------------
// Endpoint
// ---------------------------------------------------------------------------

Endpoint Endpoint::connect(const std::string& socket_path, int rank, int size) {
  net::ignore_sigpipe();
  net::Fd fd = net::unix_connect(socket_path);
  Frame hello;
  hello.kind = FrameKind::Hello;
  hello.payload = std::move(ByteWriter().i32(rank)).take();
  net::write_frame(fd.get(), hello);
  return Endpoint(std::move(fd), rank, size);
}

void Endpoint::send(int dst, std::uint32_t tag, ByteView data) {
  Frame f;
  f.kind = FrameKind::Request;
  f.payload = encode_message(Message{rank_, dst, tag, Bytes(data.begin(), data.end())});
  net::write_frame(fd_.get(), f);
}

bool Endpoint::pump(bool* released) {
  if (closed_) return false;
  std::optional<Frame> frame;
  try {
    frame = net::read_frame(fd_.get());
  } catch (const Error&) {
    frame.reset();
  }
  if (!frame || frame->kind == FrameKind::Bye) {
    closed_ = true;
    return false;
  }
  if (frame->kind == FrameKind::Control && frame->payload == kRelease) {
    if (released != nullptr) *released = true;
  } else if (frame->kind == FrameKind::Request) {
    auto m = decode_message(frame->payload);
    inbox_[{m.src, m.tag}].push_back(std::move(m.data));
  }
  return true;
}

std::optional<Bytes> Endpoint::recv(int src, std::uint32_t tag) {
  for (;;) {
    auto it = inbox_.find({src, tag});
    if (it != inbox_.end() && !it->second.empty()) {
      Bytes out = std::move(it->second.front());
      it->second.pop_front();
      return out;
    }
    if (!pump(nullptr)) return std::nullopt;
  }
}

bool Endpoint::barrier() {
  Frame f;
  f.kind = FrameKind::Control;
  f.payload = kBarrier;
  net::write_frame(fd_.get(), f);
  bool released = false;
  while (!released)
    if (!pump(&released)) return false;
  return true;
}

}  // namespace upm::mp
