#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "upm/rational.hpp"

namespace upm {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode : std::uint8_t {
  NotInstalled = 1,
  AlreadyInstalled,
  DeviceClosed,
  IncompatibleModel,
  InfeasibleJob,
  Timeout,
  ProtocolError,
  BackendFailure,
  InvalidManifest,
  InvalidSpec,
};

// Wire/CLI name of a variant, e.g. "NOT_INSTALLED".
std::string_view error_name(ErrorCode code);
std::optional<ErrorCode> error_from_name(std::string_view name);

// The one exception type thrown by runtime operations. what() is
// "<VARIANT>" or "<VARIANT>: <detail>".
class Error : public std::runtime_error {
public:
  explicit Error(ErrorCode code, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::string_view name() const noexcept { return error_name(code_); }

  // Inverse of what(): rebuilds an Error from "<VARIANT>[: detail]".
  static Error parse(std::string_view text);

private:
  ErrorCode code_;
  std::string detail_;
};

// ---------------------------------------------------------------------------
// Devices
// ---------------------------------------------------------------------------

enum class DeviceClass : std::uint8_t { Echo, Multicore, Cluster, External };

std::string_view to_string(DeviceClass c);
std::optional<DeviceClass> device_class_from_string(std::string_view s);

namespace transport {

struct InProc {
  friend bool operator==(const InProc&, const InProc&) = default;
};

struct Spawn {
  std::vector<std::string> command;
  std::optional<std::int64_t> ranks;  // CLUSTER only
  friend bool operator==(const Spawn&, const Spawn&) = default;
};

struct Connect {
  std::string address;  // host:port
  friend bool operator==(const Connect&, const Connect&) = default;
};

}  // namespace transport

using TransportSpec = std::variant<transport::InProc, transport::Spawn, transport::Connect>;

struct DeviceDescriptor {
  std::string name;
  DeviceClass device_class = DeviceClass::Echo;
  std::string model_id;
  std::set<std::string> languages;
  Rational speed_factor{1};
  TransportSpec transport = transport::InProc{};
  std::map<std::string, std::string> params;

  friend bool operator==(const DeviceDescriptor&, const DeviceDescriptor&) = default;

  // params lookup with a default
  std::string param(std::string_view key, std::string_view fallback = {}) const;
};

// Throws Error(InvalidManifest, <rule>) naming the first violated rule:
// "name", "model_id", "speed_factor", "transport/class", "ranks", "command", "address".
void validate_descriptor(const DeviceDescriptor& d);

bool is_valid_device_name(std::string_view name);

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

struct JobId {
  std::uint64_t value = 0;
  friend auto operator<=>(const JobId&, const JobId&) = default;
};

}  // namespace upm
