#include "upm/core_model.hpp"

#include <array>
#include <utility>

namespace upm {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 10> kErrorNames{{
    {ErrorCode::NotInstalled, "NOT_INSTALLED"},
    {ErrorCode::AlreadyInstalled, "ALREADY_INSTALLED"},
    {ErrorCode::DeviceClosed, "DEVICE_CLOSED"},
    {ErrorCode::IncompatibleModel, "INCOMPATIBLE_MODEL"},
    {ErrorCode::InfeasibleJob, "INFEASIBLE_JOB"},
    {ErrorCode::Timeout, "TIMEOUT"},
    {ErrorCode::ProtocolError, "PROTOCOL_ERROR"},
    {ErrorCode::BackendFailure, "BACKEND_FAILURE"},
    {ErrorCode::InvalidManifest, "INVALID_MANIFEST"},
    {ErrorCode::InvalidSpec, "INVALID_SPEC"},
}};

std::string format_error(ErrorCode code, const std::string& detail) {
  std::string out(error_name(code));
  if (!detail.empty()) out += ": " + detail;
  return out;
}

}  // namespace

std::string_view error_name(ErrorCode code) {
  for (auto& [c, n] : kErrorNames)
    if (c == code) return n;
  return "UNKNOWN";
}

std::optional<ErrorCode> error_from_name(std::string_view name) {
  for (auto& [c, n] : kErrorNames)
    if (n == name) return c;
  return std::nullopt;
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(format_error(code, detail)), code_(code), detail_(std::move(detail)) {}

Error Error::parse(std::string_view text) {
  auto colon = text.find(':');
  auto name = text.substr(0, colon);
  std::string detail;
  if (colon != std::string_view::npos) {
    auto rest = text.substr(colon + 1);
    if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    detail = std::string(rest);
  }
  if (auto code = error_from_name(name)) return Error(*code, std::move(detail));
  return Error(ErrorCode::ProtocolError, "unknown error variant '" + std::string(name) + "'");
}

std::string_view to_string(DeviceClass c) {
  switch (c) {
    case DeviceClass::Echo: return "ECHO";
    case DeviceClass::Multicore: return "MULTICORE";
    case DeviceClass::Cluster: return "CLUSTER";
    case DeviceClass::External: return "EXTERNAL";
  }
  return "ECHO";
}

std::optional<DeviceClass> device_class_from_string(std::string_view s) {
  if (s == "ECHO") return DeviceClass::Echo;
  if (s == "MULTICORE") return DeviceClass::Multicore;
  if (s == "CLUSTER") return DeviceClass::Cluster;
  if (s == "EXTERNAL") return DeviceClass::External;
  return std::nullopt;
}

std::string DeviceDescriptor::param(std::string_view key, std::string_view fallback) const {
  if (auto it = params.find(std::string(key)); it != params.end()) return it->second;
  return std::string(fallback);
}

bool is_valid_device_name(std::string_view name) {
  if (name.empty() || name.size() > 64) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

void validate_descriptor(const DeviceDescriptor& d) {
  auto fail = [](const char* rule) { throw Error(ErrorCode::InvalidManifest, rule); };

  if (!is_valid_device_name(d.name)) fail("name");
  if (d.model_id.empty()) fail("model_id");
  if (d.speed_factor <= Rational(0)) fail("speed_factor");

  switch (d.device_class) {
    case DeviceClass::Echo:
    case DeviceClass::Multicore:
      if (!std::holds_alternative<transport::InProc>(d.transport)) fail("transport/class");
      break;
    case DeviceClass::Cluster: {
      const auto* spawn = std::get_if<transport::Spawn>(&d.transport);
      if (spawn == nullptr) fail("transport/class");
      if (!spawn->ranks || *spawn->ranks < 1) fail("ranks");
      break;
    }
    case DeviceClass::External:
      if (const auto* spawn = std::get_if<transport::Spawn>(&d.transport)) {
        if (spawn->ranks) fail("ranks");
        if (spawn->command.empty() || spawn->command.front().empty()) fail("command");
      } else if (const auto* conn = std::get_if<transport::Connect>(&d.transport)) {
        const auto colon = conn->address.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == conn->address.size()) fail("address");
      } else {
        fail("transport/class");
      }
      break;
  }
}

}  // namespace upm
