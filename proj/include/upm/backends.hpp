#pragma once

#include <chrono>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "upm/bytes.hpp"
#include "upm/core_model.hpp"

namespace upm {

namespace mp {
class Endpoint;
}

// Completion handle for one submitted job.
class JobTicket {
public:
  JobTicket() = default;
  explicit JobTicket(std::shared_future<Bytes> result) : result_(std::move(result)) {}

  static JobTicket failed(const Error& e);

  bool valid() const { return result_.valid(); }
  // true once the result (or failure) is available; nullopt waits forever
  bool wait(std::optional<std::chrono::milliseconds> timeout) const;
  // Throws Error(TIMEOUT) if not complete in time (the job stays pending);
  // otherwise returns the result or rethrows the job's Error.
  Bytes collect(std::optional<std::chrono::milliseconds> timeout = std::nullopt) const;

private:
  std::shared_future<Bytes> result_;
};

struct BackendTimeouts {
  std::chrono::milliseconds handshake{5000};
  std::chrono::milliseconds job{60000};
};

// From descriptor params "handshake_timeout_ms" / "job_timeout_ms".
BackendTimeouts timeouts_for(const DeviceDescriptor& d);

// A started "general printer". Implementations are thread-safe: submit may be
// called concurrently, and jobs may complete in any order.
class Backend {
public:
  explicit Backend(DeviceDescriptor d) : descriptor_(std::move(d)) {}
  virtual ~Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const DeviceDescriptor& descriptor() const { return descriptor_; }

  // Queues one job running `model` on `payload`. Throws Error(DEVICE_CLOSED)
  // after stop(); job-level failures surface through the ticket.
  virtual JobTicket submit(std::string_view model, Bytes payload) = 0;
  // Releases workers; pending jobs fail with DEVICE_CLOSED. Idempotent.
  virtual void stop() = 0;
  // false once stopped or after the device itself failed.
  virtual bool alive() const = 0;
  // Worker/plug-in process ids (empty for in-process backends).
  virtual std::vector<int> process_ids() const { return {}; }

private:
  DeviceDescriptor descriptor_;
};

// Starts the backend matching d.device_class. Throws BACKEND_FAILURE when the
// device cannot be started, PROTOCOL_ERROR on a bad plug-in handshake
// (detail "model" when the plug-in announces a different model), TIMEOUT when
// the handshake does not complete in time.
std::shared_ptr<Backend> start_backend(const DeviceDescriptor& d);

// Worker threads used by a MULTICORE device (param "workers", default: hardware threads).
std::size_t multicore_workers(const DeviceDescriptor& d);

// Path of the rank executable used by CLUSTER devices whose SPAWN command is empty.
std::string default_cluster_worker();

// Main loop of one rank process. Returns when the router says goodbye or the
// connection closes.
void run_cluster_worker(mp::Endpoint& ep);

// MiniMP tags used between the host and the ranks of a cluster.
namespace cluster_tags {
inline constexpr std::uint32_t kJob = 1;      // host -> rank 0
inline constexpr std::uint32_t kResult = 2;   // rank 0 -> host
inline constexpr std::uint32_t kShard = 3;    // rank 0 -> rank r
inline constexpr std::uint32_t kPartial = 4;  // rank r -> rank 0
}  // namespace cluster_tags

}  // namespace upm
