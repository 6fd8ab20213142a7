#include <sys/socket.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "pending_jobs.hpp"
#include "upm/backends.hpp"
#include "upm/net.hpp"

namespace upm {

namespace {

// A plug-in speaking the frame protocol over stdio pipes (SPAWN) or TCP
// (CONNECT). The plug-in opens with HELLO{model_id}; afterwards REQUEST and
// RESPONSE/ERROR frames are paired by job_id; BYE ends the session.
class ExternalBackend final : public Backend {
public:
  explicit ExternalBackend(const DeviceDescriptor& d) : Backend(d), timeouts_(timeouts_for(d)), pending_(timeouts_.job) {
    net::ignore_sigpipe();
    const auto deadline = net::Clock::now() + timeouts_.handshake;
    if (const auto* spawn = std::get_if<transport::Spawn>(&d.transport)) {
      child_ = net::Child::spawn(spawn->command, true);
      in_fd_ = child_.from_child();
      out_fd_ = child_.to_child();
    } else {
      const auto& conn = std::get<transport::Connect>(d.transport);
      socket_ = net::tcp_connect(net::parse_host_port(conn.address), deadline);
      in_fd_ = out_fd_ = socket_.get();
    }

    try {
      handshake(deadline);
    } catch (...) {
      close_transport();
      throw;
    }
    reader_ = std::thread([this] { read_loop(); });
  }

  ~ExternalBackend() override { stop(); }

  JobTicket submit(std::string_view, Bytes payload) override {
    if (stopped_) throw Error(ErrorCode::DeviceClosed);
    auto [id, ticket] = pending_.add();
    Frame f;
    f.kind = FrameKind::Request;
    f.job_id = id;
    f.device_id = descriptor().name;
    f.payload = std::move(payload);
    try {
      std::lock_guard lock(write_mu_);
      net::write_frame(out_fd_, f);
    } catch (const Error& e) {
      pending_.fail(id, Error(ErrorCode::BackendFailure, e.what()));
    }
    return ticket;
  }

  void stop() override {
    if (stopped_.exchange(true)) return;
    try {
      Frame bye;
      bye.kind = FrameKind::Bye;
      std::lock_guard lock(write_mu_);
      net::write_frame(out_fd_, bye);
    } catch (const std::exception&) {
    }
    close_transport();
    if (reader_.joinable()) reader_.join();
    pending_.fail_all(Error(ErrorCode::DeviceClosed));
  }

  bool alive() const override { return !stopped_ && !failed_; }

  std::vector<int> process_ids() const override {
    if (child_.pid() > 0) return {child_.pid()};
    return {};
  }

private:
  void handshake(net::Deadline deadline) {
    auto hello = net::read_frame(in_fd_, deadline);
    if (!hello) throw Error(ErrorCode::BackendFailure, "plug-in exited before HELLO");
    if (hello->kind != FrameKind::Hello) throw Error(ErrorCode::ProtocolError, "expected HELLO");
    if (to_string(hello->payload) != descriptor().model_id) throw Error(ErrorCode::ProtocolError, "model");
  }

  void close_transport() {
    if (socket_) {
      ::shutdown(socket_.get(), SHUT_RDWR);
    } else {
      // closing stdin tells a well-behaved plug-in to exit; terminate() reaps or kills it
      child_.terminate(std::chrono::milliseconds(1000));
    }
  }

  void read_loop() {
    std::string why = "plug-in exited";
    try {
      for (;;) {
        auto f = net::read_frame(in_fd_);
        if (!f || f->kind == FrameKind::Bye) break;
        if (f->kind == FrameKind::Response) {
          pending_.fulfill(f->job_id, std::move(f->payload));
        } else if (f->kind == FrameKind::Error) {
          Error e(ErrorCode::BackendFailure, to_string(f->payload));
          if (f->job_id == 0) {
            why = e.detail();
            break;
          }
          pending_.fail(f->job_id, e);
        }
      }
    } catch (const std::exception& e) {
      why = e.what();
    }
    if (!stopped_) failed_ = true;
    pending_.fail_all(stopped_ ? Error(ErrorCode::DeviceClosed) : Error(ErrorCode::BackendFailure, why));
  }

  BackendTimeouts timeouts_;
  detail::PendingJobs pending_;
  net::Child child_;
  net::Fd socket_;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::mutex write_mu_;
  std::thread reader_;
  std::atomic<bool> stopped_{false};
  std::atomic<bool> failed_{false};
};

}  // namespace

std::shared_ptr<Backend> make_external_backend(const DeviceDescriptor& d) { return std::make_shared<ExternalBackend>(d); }

}  // namespace upm
