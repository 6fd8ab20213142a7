#include "doctest.h"

#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "upm/server.hpp"

using namespace upm;
using namespace std::chrono_literals;

namespace {

struct Served {
  testing::Scratch s;
  Runtime rt{s.registry};
  Server server{rt, net::HostPort{"127.0.0.1", 0}, std::chrono::milliseconds(5000)};
  std::thread loop;
  Served() {
    s.registry.install(testing::echo_device("echo0"));
    s.registry.install(testing::multicore_device("mc", 2));
    loop = std::thread([this] { server.run(); });
  }
  ~Served() {
    server.request_stop();
    loop.join();
  }
};

class Client {
public:
  explicit Client(std::uint16_t port) : fd_(net::tcp_connect({"127.0.0.1", port}, net::deadline_after(5s))) {}

  Frame call(FrameKind kind, std::string_view payload, std::string device = {}, std::uint64_t job = 0) {
    send(kind, as_view(payload), std::move(device), job);
    return receive();
  }
  void send(FrameKind kind, ByteView payload, std::string device = {}, std::uint64_t job = 0) {
    Frame f;
    f.kind = kind;
    f.job_id = job;
    f.device_id = std::move(device);
    f.payload.assign(payload.begin(), payload.end());
    net::write_frame(fd_.get(), f);
  }
  Frame receive() {
    auto f = net::read_frame(fd_.get(), net::deadline_after(10s));
    REQUIRE(f.has_value());
    return *f;
  }
  int fd() const { return fd_.get(); }

private:
  net::Fd fd_;
};

}  // namespace

TEST_CASE("a full session") {
  Served sv;
  Client c(sv.server.port());
  auto hello = c.call(FrameKind::Hello, "client");
  CHECK(hello.kind == FrameKind::Hello);
  CHECK(to_string(hello.payload) == kServeHello);

  auto opened = c.call(FrameKind::Control, "open upm://mc?model=sortu32");
  CHECK(opened.kind == FrameKind::Control);
  CHECK(to_string(opened.payload) == "ok");
  CHECK(opened.device_id == "mc");

  std::mt19937_64 rng(8);
  std::vector<Bytes> inputs;
  for (std::uint64_t i = 1; i <= 5; ++i) {
    inputs.push_back(testing::random_u32s(rng, 1000));
    c.send(FrameKind::Request, inputs.back(), "mc");
    auto ack = c.receive();
    CHECK(ack.kind == FrameKind::Control);
    CHECK(ack.job_id == i);
  }
  CHECK(to_string(c.call(FrameKind::Control, "stat", "mc").payload) == "pending=5 submitted=5");
  CHECK(to_string(c.call(FrameKind::Control, "flush", "mc").payload) == "ok");
  for (std::uint64_t i = 1; i <= 5; ++i) {
    auto r = c.call(FrameKind::Control, "read 5000", "mc");
    CHECK(r.kind == FrameKind::Response);
    CHECK(r.job_id == i);
    CHECK(r.payload == oracle::sortu32(inputs[i - 1]));
  }
  auto empty = c.call(FrameKind::Control, "read 10", "mc");
  CHECK(empty.kind == FrameKind::Error);
  CHECK(to_string(empty.payload) == "TIMEOUT: no pending job");

  CHECK(to_string(c.call(FrameKind::Control, "close", "mc").payload) == "ok");
  auto closed = c.call(FrameKind::Request, "x", "mc");
  CHECK(closed.kind == FrameKind::Error);
  CHECK(to_string(closed.payload) == "DEVICE_CLOSED: mc");

  CHECK(c.call(FrameKind::Bye, "").kind == FrameKind::Bye);
  CHECK_FALSE(net::read_frame(c.fd(), net::deadline_after(5s)).has_value());
}

TEST_CASE("errors come back as ERROR frames") {
  Served sv;
  Client c(sv.server.port());
  auto early = c.call(FrameKind::Control, "open upm://echo0");
  CHECK(early.kind == FrameKind::Error);
  CHECK(to_string(early.payload) == "PROTOCOL_ERROR: expected HELLO");

  Client d(sv.server.port());
  d.call(FrameKind::Hello, "");
  CHECK(to_string(d.call(FrameKind::Control, "open upm://ghost").payload) == "NOT_INSTALLED: ghost");
  CHECK(to_string(d.call(FrameKind::Control, "open upm://echo0?model=sortu32").payload) == "INCOMPATIBLE_MODEL: echo0 hosts echo, not sortu32");
  CHECK(to_string(d.call(FrameKind::Control, "open nonsense").payload) == "PROTOCOL_ERROR: path");
  CHECK(to_string(d.call(FrameKind::Control, "open upm://echo0", "e").payload) == "ok");
  CHECK(to_string(d.call(FrameKind::Control, "dance", "e").payload) == "PROTOCOL_ERROR: control dance");
  CHECK(to_string(d.call(FrameKind::Control, "read soon", "e").payload) == "PROTOCOL_ERROR: read timeout");
  CHECK(d.call(FrameKind::Response, "", "e").kind == FrameKind::Error);
  // the session survives errors
  d.call(FrameKind::Request, "still here", "e");
  CHECK(to_string(d.call(FrameKind::Control, "read", "e").payload) == "still here");
}

TEST_CASE("a bad magic ends the connection") {
  Served sv;
  Client c(sv.server.port());
  net::write_all(c.fd(), as_view(std::string_view("JUNKJUNKJUNKJUNKJUNKJUNK")));
  auto err = net::read_frame(c.fd(), net::deadline_after(5s));
  REQUIRE(err.has_value());
  CHECK(err->kind == FrameKind::Error);
  CHECK(to_string(err->payload).rfind("PROTOCOL_ERROR", 0) == 0);
  CHECK_FALSE(net::read_frame(c.fd(), net::deadline_after(5s)).has_value());

  // the server keeps serving others
  Client d(sv.server.port());
  CHECK(d.call(FrameKind::Hello, "").kind == FrameKind::Hello);
}

TEST_CASE("concurrent clients keep their own order") {
  Served sv;
  auto worker = [&](std::string tag) {
    Client c(sv.server.port());
    c.call(FrameKind::Hello, "");
    REQUIRE(to_string(c.call(FrameKind::Control, "open upm://echo0").payload) == "ok");
    for (int i = 0; i < 50; ++i) c.call(FrameKind::Request, tag + std::to_string(i), "echo0");
    for (int i = 0; i < 50; ++i) CHECK(to_string(c.call(FrameKind::Control, "read", "echo0").payload) == tag + std::to_string(i));
    c.call(FrameKind::Bye, "");
  };
  std::thread a(worker, "a"), b(worker, "b"), d(worker, "d");
  a.join();
  b.join();
  d.join();
}

TEST_CASE("stop with a client still attached") {
  Served sv;
  Client c(sv.server.port());
  c.call(FrameKind::Hello, "");
  sv.server.request_stop();
  CHECK_FALSE(net::read_frame(c.fd(), net::deadline_after(5s)).has_value());
}
