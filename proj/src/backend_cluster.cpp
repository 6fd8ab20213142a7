#include <atomic>
#include <mutex>

#include "pending_jobs.hpp"
#include "upm/backends.hpp"
#include "upm/kernels.hpp"
#include "upm/minimp.hpp"
#include "upm/net.hpp"

namespace upm {

namespace {

std::atomic<std::uint64_t> g_cluster_instances{0};

// Rank processes behind an in-backend router. Jobs travel host -> rank 0 as
// [op u8]['J' kernel | 'A' coupling-app][job u64][model str16][payload]; rank
// 0 answers [job u64][status u8] followed by the result, or by
// [error code u8][detail str16] when status is 1.
class ClusterBackend final : public Backend {
public:
  explicit ClusterBackend(const DeviceDescriptor& d) : Backend(d), timeouts_(timeouts_for(d)), pending_(timeouts_.job) {
    const auto& spawn = std::get<transport::Spawn>(d.transport);
    const int ranks = static_cast<int>(*spawn.ranks);
    const std::string cluster_id = d.name + "#" + std::to_string(++g_cluster_instances);
    router_ = std::make_unique<mp::Router>(
        cluster_id, ranks, [this](mp::Message m) { on_host_message(std::move(m)); },
        [this](const std::string& why) { on_failure(why); });

    std::vector<std::string> base = spawn.command;
    if (base.empty()) base.push_back(default_cluster_worker());
    for (int r = 0; r < ranks; ++r) {
      auto argv = base;
      argv.insert(argv.end(), {"--socket", router_->socket_path(), "--rank", std::to_string(r), "--size",
                               std::to_string(ranks)});
      children_.push_back(net::Child::spawn(argv, false));
    }
    try {
      router_->accept_all(net::Clock::now() + timeouts_.handshake);
    } catch (const Error& e) {
      stop();
      throw Error(ErrorCode::BackendFailure, std::string("cluster start: ") + e.what());
    }
  }

  ~ClusterBackend() override { stop(); }

  JobTicket submit(std::string_view model, Bytes payload) override {
    if (stopped_) throw Error(ErrorCode::DeviceClosed);
    auto [id, ticket] = pending_.add();
    if (failed_) return ticket;  // already failed by fail_all
    const char op = model == kernels::kCouplingApp ? 'A' : 'J';
    ByteWriter w(payload.size() + 16 + model.size());
    w.u8(static_cast<std::uint8_t>(op)).u64(id).str16(model).raw(payload);
    try {
      router_->send_from_host(0, cluster_tags::kJob, w.bytes());
    } catch (const Error& e) {
      pending_.fail(id, Error(ErrorCode::BackendFailure, e.what()));
    }
    return ticket;
  }

  void stop() override {
    if (stopped_.exchange(true)) return;
    router_->shutdown();
    for (auto& c : children_) c.terminate(std::chrono::milliseconds(1000));
    pending_.fail_all(Error(ErrorCode::DeviceClosed));
  }

  bool alive() const override { return !stopped_ && !failed_; }

  std::vector<int> process_ids() const override {
    std::vector<int> out;
    for (const auto& c : children_) out.push_back(c.pid());
    return out;
  }

private:
  void on_host_message(mp::Message m) {
    if (m.tag != cluster_tags::kResult) return;
    try {
      ByteReader r(m.data);
      const auto id = r.u64();
      if (r.u8() == 0) {
        auto rest = r.rest();
        pending_.fulfill(id, Bytes(rest.begin(), rest.end()));
      } else {
        const auto code = static_cast<ErrorCode>(r.u8());
        pending_.fail(id, Error(error_name(code) == "UNKNOWN" ? ErrorCode::BackendFailure : code, r.str16()));
      }
    } catch (const std::out_of_range&) {
      on_failure("malformed result from rank 0");
    }
  }

  void on_failure(const std::string& why) {
    failed_ = true;
    pending_.fail_all(Error(ErrorCode::BackendFailure, why));
  }

  BackendTimeouts timeouts_;
  detail::PendingJobs pending_;
  std::unique_ptr<mp::Router> router_;
  std::vector<net::Child> children_;
  std::atomic<bool> stopped_{false};
  std::atomic<bool> failed_{false};
};

}  // namespace

std::shared_ptr<Backend> make_cluster_backend(const DeviceDescriptor& d) { return std::make_shared<ClusterBackend>(d); }

}  // namespace upm
