#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "upm/backends.hpp"

namespace upm::detail {

// In-flight jobs of an out-of-process backend, keyed by wire job id. A
// watchdog fails every job still outstanding at its deadline with TIMEOUT.
class PendingJobs {
public:
  explicit PendingJobs(std::chrono::milliseconds job_timeout);
  ~PendingJobs();
  PendingJobs(const PendingJobs&) = delete;
  PendingJobs& operator=(const PendingJobs&) = delete;

  std::pair<std::uint64_t, JobTicket> add();
  void fulfill(std::uint64_t id, Bytes result);
  void fail(std::uint64_t id, const Error& e);
  // Fails everything outstanding; later add() calls return already-failed tickets.
  void fail_all(const Error& e);

private:
  struct Entry {
    std::promise<Bytes> promise;
    std::chrono::steady_clock::time_point deadline;
  };
  void watchdog();

  std::chrono::milliseconds job_timeout_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, Entry> jobs_;
  std::uint64_t next_id_ = 1;
  std::optional<Error> terminal_;
  bool stopping_ = false;
  std::thread watchdog_;
};

}  // namespace upm::detail
