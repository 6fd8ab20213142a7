#include "upm/fileapi.hpp"

#include "upm/coupling_app.hpp"
#include "upm/kernels.hpp"

namespace upm {

DevicePath parse_device_path(std::string_view path) {
  constexpr std::string_view scheme = "upm://";
  if (path.substr(0, scheme.size()) != scheme) throw Error(ErrorCode::ProtocolError, "path");
  path.remove_prefix(scheme.size());
  DevicePath out;
  const auto q = path.find('?');
  out.name = std::string(path.substr(0, q));
  if (!is_valid_device_name(out.name)) throw Error(ErrorCode::ProtocolError, "path");
  if (q != std::string_view::npos) {
    constexpr std::string_view key = "model=";
    auto query = path.substr(q + 1);
    if (query.substr(0, key.size()) != key) throw Error(ErrorCode::ProtocolError, "path");
    out.model = std::string(query.substr(key.size()));
    if (!coupling::is_valid_token(*out.model)) throw Error(ErrorCode::ProtocolError, "path");
  }
  return out;
}

std::string resolve_model(const DeviceDescriptor& d, const std::optional<std::string>& query) {
  if (query) {
    if (!kernels::model_hosts(d.model_id, *query))
      throw Error(ErrorCode::IncompatibleModel, d.name + " hosts " + d.model_id + ", not " + *query);
    return *query;
  }
  if (kernels::kernel_set(d.model_id))
    throw Error(ErrorCode::IncompatibleModel, d.name + " hosts kernel set " + d.model_id + "; add ?model=");
  return d.model_id;
}

// ---------------------------------------------------------------------------
// DeviceHandle
// ---------------------------------------------------------------------------

DeviceHandle::DeviceHandle(DeviceDescriptor d, std::string model, std::shared_ptr<Backend> backend)
    : descriptor_(std::move(d)), model_(std::move(model)), backend_(std::move(backend)) {}

DeviceHandle::DeviceHandle(DeviceHandle&& o) noexcept { *this = std::move(o); }

DeviceHandle& DeviceHandle::operator=(DeviceHandle&& o) noexcept {
  if (this != &o) {
    close();
    descriptor_ = std::move(o.descriptor_);
    model_ = std::move(o.model_);
    backend_ = std::move(o.backend_);
    next_job_ = o.next_job_;
    submitted_ = o.submitted_;
    pending_ = std::move(o.pending_);
    o.backend_.reset();
    o.pending_.clear();
  }
  return *this;
}

DeviceHandle::~DeviceHandle() { close(); }

void DeviceHandle::require_open() const {
  if (!backend_) throw Error(ErrorCode::DeviceClosed);
}

JobId DeviceHandle::write(Bytes payload) {
  require_open();
  JobTicket ticket;
  try {
    ticket = backend_->submit(model_, std::move(payload));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DeviceClosed) {
      close();
      throw;
    }
    throw Error(ErrorCode::BackendFailure, e.detail());
  }
  const JobId id{next_job_++};
  ++submitted_;
  pending_.emplace_back(id, std::move(ticket));
  return id;
}

Bytes DeviceHandle::read(std::optional<std::chrono::milliseconds> timeout) {
  require_open();
  if (pending_.empty()) throw Error(ErrorCode::Timeout, "no pending job");
  auto& [id, ticket] = pending_.front();
  if (!ticket.wait(timeout)) throw Error(ErrorCode::Timeout, "job " + std::to_string(id.value));
  JobTicket done = std::move(ticket);
  pending_.pop_front();
  try {
    return done.collect();
  } catch (const Error&) {
    if (!backend_->alive()) close();
    throw;
  }
}

std::string DeviceHandle::control(std::string_view cmd, std::optional<std::chrono::milliseconds> timeout) {
  require_open();
  if (cmd == "flush") {
    const auto deadline = timeout ? std::optional(std::chrono::steady_clock::now() + *timeout) : std::nullopt;
    for (const auto& [id, ticket] : pending_) {
      std::optional<std::chrono::milliseconds> left;
      if (deadline)
        left = std::max(std::chrono::milliseconds(0), std::chrono::duration_cast<std::chrono::milliseconds>(
                                                          *deadline - std::chrono::steady_clock::now()));
      if (!ticket.wait(left)) throw Error(ErrorCode::Timeout, "flush");
    }
    return "ok";
  }
  if (cmd == "stat") return "pending=" + std::to_string(pending_.size()) + " submitted=" + std::to_string(submitted_);
  throw Error(ErrorCode::ProtocolError, "control " + std::string(cmd));
}

void DeviceHandle::close() {
  pending_.clear();
  backend_.reset();
}

// ---------------------------------------------------------------------------
// Runtime
// ---------------------------------------------------------------------------

DeviceHandle Runtime::open(std::string_view path) {
  const auto p = parse_device_path(path);
  auto d = registry_.lookup(p.name);
  auto model = resolve_model(d, p.model);
  auto backend = backend_for(d);
  return DeviceHandle(std::move(d), std::move(model), std::move(backend));
}

std::shared_ptr<Backend> Runtime::backend_for(const DeviceDescriptor& d) {
  std::lock_guard lock(mu_);
  if (auto it = backends_.find(d.name); it != backends_.end()) {
    if (auto b = it->second.lock(); b && b->alive() && b->descriptor() == d) return b;
  }
  std::shared_ptr<Backend> b;
  try {
    b = start_backend(d);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidManifest) throw Error(ErrorCode::BackendFailure, e.what());
    throw;
  }
  backends_[d.name] = b;
  return b;
}

}  // namespace upm
