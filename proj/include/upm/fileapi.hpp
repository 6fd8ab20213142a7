#pragma once

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "upm/backends.hpp"
#include "upm/bytes.hpp"
#include "upm/core_model.hpp"
#include "upm/registry.hpp"

// Devices as files: open a device path, write a job, read its result, close.
// Path grammar:
//
//   path  = "upm://" name [ "?model=" model ]
//   name  = [a-z0-9_-]{1,64}
//   model = [A-Za-z0-9_.-]{1,64}
//
// `model` selects the resident kernel; it must equal the device's model_id or
// be a member of the kernel set the model_id names. A device whose model_id
// is a kernel set must be opened with a `model` query.
namespace upm {

struct DevicePath {
  std::string name;
  std::optional<std::string> model;
  friend bool operator==(const DevicePath&, const DevicePath&) = default;
};

DevicePath parse_device_path(std::string_view path);  // PROTOCOL_ERROR("path")

// An open device "file". One write submits one job; one read returns one
// whole result, in submission order. Single owner; movable between threads.
class DeviceHandle {
public:
  DeviceHandle() = default;
  DeviceHandle(DeviceHandle&&) noexcept;
  DeviceHandle& operator=(DeviceHandle&&) noexcept;
  ~DeviceHandle();

  bool is_open() const { return backend_ != nullptr; }
  const DeviceDescriptor& descriptor() const { return descriptor_; }
  const std::string& model() const { return model_; }

  JobId write(Bytes payload);
  // nullopt waits forever. TIMEOUT leaves the pending job in place.
  Bytes read(std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  // "flush" waits for every pending job without consuming it and returns "ok";
  // "stat" returns "pending=<n> submitted=<m>".
  std::string control(std::string_view cmd, std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  void close();

  std::size_t pending() const { return pending_.size(); }
  // Job the next read() returns, if any.
  std::optional<JobId> next_read() const {
    return pending_.empty() ? std::nullopt : std::optional(pending_.front().first);
  }

private:
  friend class Runtime;
  DeviceHandle(DeviceDescriptor d, std::string model, std::shared_ptr<Backend> backend);
  void require_open() const;

  DeviceDescriptor descriptor_;
  std::string model_;
  std::shared_ptr<Backend> backend_;
  std::uint64_t next_job_ = 1;
  std::uint64_t submitted_ = 0;
  std::deque<std::pair<JobId, JobTicket>> pending_;
};

// Opens handles against a registry. Handles on the same device share one
// backend instance, which is stopped when the last of them closes.
class Runtime {
public:
  explicit Runtime(const Registry& registry) : registry_(registry) {}

  // NOT_INSTALLED, INCOMPATIBLE_MODEL, PROTOCOL_ERROR, BACKEND_FAILURE, TIMEOUT
  DeviceHandle open(std::string_view path);

  const Registry& registry() const { return registry_; }

private:
  std::shared_ptr<Backend> backend_for(const DeviceDescriptor& d);

  const Registry& registry_;
  std::mutex mu_;
  std::map<std::string, std::weak_ptr<Backend>> backends_;
};

// The kernel a path resolves to on `d` (INCOMPATIBLE_MODEL if none).
std::string resolve_model(const DeviceDescriptor& d, const std::optional<std::string>& query);

}  // namespace upm
