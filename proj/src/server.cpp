#include "upm/server.hpp"

#include <sys/socket.h>

#include <charconv>
#include <map>

namespace upm {

namespace {

Frame reply(FrameKind kind, const Frame& to, std::string_view payload) {
  Frame f;
  f.kind = kind;
  f.job_id = to.job_id;
  f.device_id = to.device_id;
  f.payload = to_bytes(payload);
  return f;
}

Frame error_frame(const Frame& to, const Error& e) { return reply(FrameKind::Error, to, e.what()); }

}  // namespace

Server::Server(Runtime& runtime, const net::HostPort& listen, std::chrono::milliseconds default_read_timeout)
    : runtime_(runtime), read_timeout_(default_read_timeout) {
  net::ignore_sigpipe();
  listener_ = net::tcp_listen(listen, 64);
  port_ = net::local_port(listener_.get());
}

Server::~Server() {
  request_stop();
  reap(true);
}

void Server::run() {
  while (!stop_) {
    try {
      auto fd = net::accept_one(listener_.get(), net::Clock::now() + std::chrono::milliseconds(100));
      auto c = std::make_unique<Connection>();
      c->fd = std::move(fd);
      auto* raw = c.get();
      std::lock_guard lock(mu_);
      connections_.push_back(std::move(c));
      raw->thread = std::thread([this, raw] { serve_connection(*raw); });
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Timeout) throw;
    }
    reap(false);
  }
  reap(true);
}

void Server::reap(bool all) {
  std::list<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (all && !(*it)->done) ::shutdown((*it)->fd.get(), SHUT_RDWR);
      if (all || (*it)->done) {
        finished.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished)
    if (c->thread.joinable()) c->thread.join();
}

void Server::serve_connection(Connection& c) {
  const int fd = c.fd.get();
  std::map<std::string, DeviceHandle> handles;
  bool greeted = false;

  auto send = [&](const Frame& f) { net::write_frame(fd, f); };

  try {
    for (;;) {
      std::optional<Frame> in;
      try {
        in = net::read_frame(fd);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ProtocolError) send(error_frame(Frame{}, e));
        break;
      }
      if (!in) break;
      const Frame& f = *in;

      if (!greeted) {
        if (f.kind != FrameKind::Hello) {
          send(error_frame(f, Error(ErrorCode::ProtocolError, "expected HELLO")));
          break;
        }
        greeted = true;
        send(reply(FrameKind::Hello, f, kServeHello));
        continue;
      }

      try {
        switch (f.kind) {
          case FrameKind::Bye:
            handles.clear();
            send(reply(FrameKind::Bye, f, ""));
            c.done = true;
            return;
          case FrameKind::Request: {
            auto h = handles.find(f.device_id);
            if (h == handles.end()) throw Error(ErrorCode::DeviceClosed, f.device_id);
            const JobId id = h->second.write(f.payload);
            Frame ok = reply(FrameKind::Control, f, "ok");
            ok.job_id = id.value;
            send(ok);
            break;
          }
          case FrameKind::Control: {
            const std::string cmd = to_string(f.payload);
            const auto space = cmd.find(' ');
            const std::string verb = cmd.substr(0, space);
            const std::string arg = space == std::string::npos ? "" : cmd.substr(space + 1);
            if (verb == "open") {
              auto handle = runtime_.open(arg);
              std::string key = f.device_id.empty() ? handle.descriptor().name : f.device_id;
              handles[key] = std::move(handle);
              Frame ok = reply(FrameKind::Control, f, "ok");
              ok.device_id = key;
              send(ok);
              break;
            }
            auto h = handles.find(f.device_id);
            if (h == handles.end()) throw Error(ErrorCode::DeviceClosed, f.device_id);
            if (verb == "close") {
              handles.erase(h);
              send(reply(FrameKind::Control, f, "ok"));
            } else if (verb == "read") {
              auto timeout = read_timeout_;
              if (!arg.empty()) {
                long long ms = 0;
                auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), ms);
                if (ec != std::errc{} || p != arg.data() + arg.size() || ms < 0)
                  throw Error(ErrorCode::ProtocolError, "read timeout");
                timeout = std::chrono::milliseconds(ms);
              }
              const auto id = h->second.next_read();
              Frame out = reply(FrameKind::Response, f, "");
              out.payload = h->second.read(timeout);
              out.job_id = id ? id->value : 0;
              send(out);
            } else if (verb == "flush" || verb == "stat") {
              send(reply(FrameKind::Control, f, h->second.control(verb, read_timeout_)));
            } else {
              throw Error(ErrorCode::ProtocolError, "control " + verb);
            }
            break;
          }
          default:
            throw Error(ErrorCode::ProtocolError, "unexpected frame kind");
        }
      } catch (const Error& e) {
        send(error_frame(f, e));
      }
    }
  } catch (const std::exception&) {
    // peer gone mid-write
  }
  c.done = true;
}

}  // namespace upm
