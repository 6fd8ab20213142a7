#include "upm/backends.hpp"

#include <unistd.h>

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <thread>

#include "pending_jobs.hpp"
#include "upm/kernels.hpp"

namespace upm {

std::shared_ptr<Backend> make_cluster_backend(const DeviceDescriptor& d);
std::shared_ptr<Backend> make_external_backend(const DeviceDescriptor& d);

// ---------------------------------------------------------------------------
// JobTicket
// ---------------------------------------------------------------------------

JobTicket JobTicket::failed(const Error& e) {
  std::promise<Bytes> p;
  p.set_exception(std::make_exception_ptr(e));
  return JobTicket(p.get_future().share());
}

bool JobTicket::wait(std::optional<std::chrono::milliseconds> timeout) const {
  if (!result_.valid()) return true;
  if (!timeout) {
    result_.wait();
    return true;
  }
  return result_.wait_for(*timeout) == std::future_status::ready;
}

Bytes JobTicket::collect(std::optional<std::chrono::milliseconds> timeout) const {
  if (!result_.valid()) throw Error(ErrorCode::BackendFailure, "no job");
  if (!wait(timeout)) throw Error(ErrorCode::Timeout, "job not complete");
  return result_.get();
}

BackendTimeouts timeouts_for(const DeviceDescriptor& d) {
  BackendTimeouts t;
  auto read_ms = [&](const char* key, std::chrono::milliseconds& out) {
    const auto v = d.param(key);
    if (v.empty()) return;
    try {
      out = std::chrono::milliseconds(std::stoll(v));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidManifest, key);
    }
  };
  read_ms("handshake_timeout_ms", t.handshake);
  read_ms("job_timeout_ms", t.job);
  return t;
}

std::size_t multicore_workers(const DeviceDescriptor& d) {
  const auto v = d.param("workers");
  if (!v.empty()) {
    try {
      const auto n = std::stoll(v);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::InvalidManifest, "workers");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// PendingJobs
// ---------------------------------------------------------------------------

namespace detail {

PendingJobs::PendingJobs(std::chrono::milliseconds job_timeout)
    : job_timeout_(job_timeout), watchdog_([this] { watchdog(); }) {}

PendingJobs::~PendingJobs() {
  fail_all(Error(ErrorCode::DeviceClosed));
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  watchdog_.join();
}

std::pair<std::uint64_t, JobTicket> PendingJobs::add() {
  std::lock_guard lock(mu_);
  const auto id = next_id_++;
  if (terminal_) return {id, JobTicket::failed(*terminal_)};
  Entry e;
  e.deadline = std::chrono::steady_clock::now() + job_timeout_;
  JobTicket ticket(e.promise.get_future().share());
  jobs_.emplace(id, std::move(e));
  cv_.notify_all();
  return {id, std::move(ticket)};
}

void PendingJobs::fulfill(std::uint64_t id, Bytes result) {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return;  // already timed out
  it->second.promise.set_value(std::move(result));
  jobs_.erase(it);
}

void PendingJobs::fail(std::uint64_t id, const Error& e) {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return;
  it->second.promise.set_exception(std::make_exception_ptr(e));
  jobs_.erase(it);
}

void PendingJobs::fail_all(const Error& e) {
  std::lock_guard lock(mu_);
  if (!terminal_) terminal_ = e;
  for (auto& [id, entry] : jobs_) entry.promise.set_exception(std::make_exception_ptr(e));
  jobs_.clear();
}

void PendingJobs::watchdog() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    if (jobs_.empty()) {
      cv_.wait(lock);
      continue;
    }
    auto earliest = jobs_.begin();
    for (auto it = jobs_.begin(); it != jobs_.end(); ++it)
      if (it->second.deadline < earliest->second.deadline) earliest = it;
    const auto deadline = earliest->second.deadline;
    if (std::chrono::steady_clock::now() >= deadline) {
      earliest->second.promise.set_exception(
          std::make_exception_ptr(Error(ErrorCode::Timeout, "job exceeded " + std::to_string(job_timeout_.count()) + " ms")));
      jobs_.erase(earliest);
      continue;
    }
    cv_.wait_until(lock, deadline);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// In-process backends (ECHO, MULTICORE)
// ---------------------------------------------------------------------------

namespace {

// A fixed set of job threads draining a FIFO. Each job evaluates its kernel
// over `shards` shards (one per worker) and combines in shard order.
class InProcBackend final : public Backend {
public:
  InProcBackend(DeviceDescriptor d, std::size_t job_threads, std::size_t shards)
      : Backend(std::move(d)), shards_(shards) {
    for (std::size_t i = 0; i < job_threads; ++i) threads_.emplace_back([this] { loop(); });
  }

  ~InProcBackend() override { stop(); }

  JobTicket submit(std::string_view model, Bytes payload) override {
    const kernels::Kernel* k = kernels::find_kernel(model);
    std::lock_guard lock(mu_);
    if (stopped_) throw Error(ErrorCode::DeviceClosed);
    if (k == nullptr) return JobTicket::failed(Error(ErrorCode::BackendFailure, "model"));
    Job job{k, std::move(payload), {}};
    JobTicket ticket(job.promise.get_future().share());
    queue_.push_back(std::move(job));
    cv_.notify_one();
    return ticket;
  }

  void stop() override {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      stopped_ = true;
      for (auto& job : queue_) job.promise.set_exception(std::make_exception_ptr(Error(ErrorCode::DeviceClosed)));
      queue_.clear();
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  bool alive() const override {
    std::lock_guard lock(mu_);
    return !stopped_;
  }

private:
  struct Job {
    const kernels::Kernel* kernel;
    Bytes payload;
    std::promise<Bytes> promise;
  };

  void loop() {
    for (;;) {
      Job job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopped_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      try {
        job.promise.set_value(shards_ <= 1 ? kernels::run(*job.kernel, job.payload)
                                           : kernels::run_parallel(*job.kernel, job.payload, shards_));
      } catch (...) {
        job.promise.set_exception(std::current_exception());
      }
    }
  }

  std::size_t shards_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Job> queue_;
  bool stopped_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace

std::shared_ptr<Backend> start_backend(const DeviceDescriptor& d) {
  validate_descriptor(d);
  switch (d.device_class) {
    case DeviceClass::Echo: return std::make_shared<InProcBackend>(d, 1, 1);
    case DeviceClass::Multicore: {
      const auto workers = multicore_workers(d);
      return std::make_shared<InProcBackend>(d, workers, workers);
    }
    case DeviceClass::Cluster: return make_cluster_backend(d);
    case DeviceClass::External: return make_external_backend(d);
  }
  throw Error(ErrorCode::BackendFailure, "device class");
}

std::string default_cluster_worker() {
  if (const char* env = std::getenv("UPM_CLUSTER_WORKER"); env != nullptr && *env != '\0') return env;
  std::error_code ec;
  const auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    const auto sibling = self.parent_path() / "upm-cluster-worker";
    if (std::filesystem::exists(sibling, ec)) return sibling.string();
  }
#ifdef UPM_DEFAULT_CLUSTER_WORKER
  return UPM_DEFAULT_CLUSTER_WORKER;
#else
  return "upm-cluster-worker";
#endif
}

}  // namespace upm
