#include "doctest.h"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "upm/minimp.hpp"

using namespace upm;

namespace {

// A router plus `size` rank endpoints running as threads of this process.
struct Harness {
  std::mutex mu;
  std::condition_variable cv;
  std::vector<mp::Message> to_host;
  std::string failure;
  mp::Router router;

  Harness(const std::string& id, int size)
      : router(
            id, size,
            [this](mp::Message m) {
              std::lock_guard lock(mu);
              to_host.push_back(std::move(m));
              cv.notify_all();
            },
            [this](const std::string& why) {
              std::lock_guard lock(mu);
              failure = why;
            }) {}

  std::vector<std::thread> ranks;

  template <class Body>
  void start(Body body) {
    for (int r = 0; r < router.size(); ++r)
      ranks.emplace_back([this, r, body] {
        auto ep = mp::Endpoint::connect(router.socket_path(), r, router.size());
        body(ep);
      });
    router.accept_all(net::Clock::now() + std::chrono::seconds(5));
  }

  void join() {
    for (auto& t : ranks) t.join();
    ranks.clear();
  }
};

}  // namespace

TEST_CASE("messages on one (src, dst, tag) arrive in send order") {
  Harness h("fifo", 4);
  constexpr int kPerTag = 300;
  std::atomic<int> checked{0};
  std::atomic<int> finished{0};
  auto linger = [&](mp::Endpoint& ep) {
    ++finished;
    CHECK_FALSE(ep.recv(0, 99).has_value());
  };
  h.start([&](mp::Endpoint& ep) {
    if (ep.rank() != 0) {
      for (int i = 0; i < kPerTag; ++i) {
        for (std::uint32_t tag : {1u, 2u}) {
          ByteWriter w;
          w.i32(ep.rank()).u32(tag).u32(static_cast<std::uint32_t>(i));
          ep.send(0, tag, w.bytes());
        }
      }
      ep.barrier();
      linger(ep);
      return;
    }
    // drain tag 2 from every source before touching tag 1, so tag-1 traffic
    // is buffered and must still come out in order
    for (std::uint32_t tag : {2u, 1u}) {
      for (int src = 3; src >= 1; --src) {
        for (int i = 0; i < kPerTag; ++i) {
          auto m = ep.recv(src, tag);
          REQUIRE(m.has_value());
          ByteReader r(*m);
          CHECK(r.i32() == src);
          CHECK(r.u32() == tag);
          CHECK(r.u32() == static_cast<std::uint32_t>(i));
          ++checked;
        }
      }
    }
    ep.barrier();
    linger(ep);
  });
  while (finished < 4) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  h.router.shutdown();
  h.join();
  CHECK(checked == 3 * 2 * kPerTag);
  CHECK(h.failure.empty());
}

TEST_CASE("barrier returns only after every rank entered") {
  constexpr int kSize = 5, kRounds = 20;
  Harness h("barrier", kSize);
  std::atomic<int> entered[kRounds] = {};
  std::atomic<int> violations{0};
  std::atomic<int> finished{0};
  h.start([&](mp::Endpoint& ep) {
    std::mt19937 rng(static_cast<unsigned>(ep.rank()));
    for (int round = 0; round < kRounds; ++round) {
      std::this_thread::sleep_for(std::chrono::microseconds(rng() % 2000));
      ++entered[round];
      REQUIRE(ep.barrier());
      if (entered[round].load() != kSize) ++violations;
    }
    ++finished;
    CHECK_FALSE(ep.recv(0, 99).has_value());
  });
  while (finished < kSize) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  h.router.shutdown();
  h.join();
  CHECK(violations == 0);
  CHECK(h.failure.empty());
}

TEST_CASE("host traffic, shutdown and the connection log") {
  mp::ConnectionLog::global().clear();
  Harness h("hostio", 3);
  h.start([](mp::Endpoint& ep) {
    if (ep.rank() == 2) {
      auto job = ep.recv(mp::kHost, 7);
      REQUIRE(job.has_value());
      Bytes reply = *job;
      reply.push_back('!');
      ep.send(mp::kHost, 8, reply);
    }
    // every rank then waits until the router says goodbye
    CHECK_FALSE(ep.recv(0, 99).has_value());
  });
  h.router.send_from_host(2, 7, as_view("job"));
  {
    std::unique_lock lock(h.mu);
    REQUIRE(h.cv.wait_for(lock, std::chrono::seconds(5), [&] { return !h.to_host.empty(); }));
    CHECK(h.to_host[0].src == 2);
    CHECK(h.to_host[0].dst == mp::kHost);
    CHECK(h.to_host[0].tag == 8);
    CHECK(to_string(h.to_host[0].data) == "job!");
  }
  h.router.shutdown();
  h.join();
  h.router.shutdown();  // idempotent

  const auto log = mp::ConnectionLog::global().entries();
  std::set<std::string> froms;
  for (const auto& e : log) {
    CHECK(mp::cluster_of(e.to) == "hostio");
    froms.insert(e.from);
  }
  CHECK(froms.count("host") == 1);
  for (int r = 0; r < 3; ++r) CHECK(froms.count("hostio/rank" + std::to_string(r)) == 1);
}

TEST_CASE("message encoding round-trips") {
  mp::Message m{3, -1, 0xdeadbeef, to_bytes("data")};
  const auto back = mp::decode_message(mp::encode_message(m));
  CHECK(back.src == 3);
  CHECK(back.dst == -1);
  CHECK(back.tag == 0xdeadbeef);
  CHECK(to_string(back.data) == "data");
}
