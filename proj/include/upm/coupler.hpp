#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "upm/coupling_app.hpp"
#include "upm/fileapi.hpp"

// The super-application: apps run inside CLUSTER devices and never talk to
// each other directly. Each relay pass (1) polls every app for one outbound
// envelope, (2) queues it for its destination, and (3) writes one queued
// envelope into each destination app, all through ordinary device handles.
namespace upm::coupling {

struct AppSpec {
  std::string app_id;
  std::string device;
  AppScript script;
};

struct Topology {
  std::vector<AppSpec> apps;
  std::size_t buffer_bound = 4;  // envelopes queued per destination
};

// {"buffer_bound":N,"apps":[{"app_id":"A","device":"clu0","script":[...]}, ...]}
// Throws INVALID_SPEC.
Topology topology_from_json(const nlohmann::json& j);
Topology parse_topology(std::string_view text);

enum class FinalState : std::uint8_t { Quiescent, Stalled, Failed };
std::string_view to_string(FinalState s);

using Channel = std::tuple<std::string, std::string, std::string>;  // src, dst, tag

struct QuiescenceReport {
  FinalState state = FinalState::Stalled;
  std::size_t steps = 0;
  std::map<Channel, std::uint64_t> delivered;
  std::string failed_app;
  std::string detail;
};

// "channel <src> <dst> <tag> <count>" per channel in sorted order, then
// "state=<QUIESCENT|STALLED|FAILED>".
std::string format_report(const QuiescenceReport& r);

class Coordinator {
public:
  enum class State : std::uint8_t { Running, Failed, Closed };

  // Validates the topology against the runtime's registry, opens one handle
  // per app and loads its script. NOT_INSTALLED, INVALID_SPEC, BACKEND_FAILURE.
  Coordinator(Runtime& runtime, Topology topology,
              std::chrono::milliseconds io_timeout = std::chrono::milliseconds(60000));
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  // One round-robin pass; true if any envelope moved. BACKEND_FAILURE (with
  // the app id) moves the coordinator to Failed.
  bool relay_step();
  QuiescenceReport run_until_quiescent(std::size_t max_steps);
  // Closes every handle; the cluster workers stop with their last handle.
  void shutdown();

  State state() const { return state_; }
  std::size_t open_handles() const;
  bool quiescent() const;
  // Every envelope written to a destination app, in delivery order.
  const std::vector<Envelope>& delivery_log() const { return log_; }
  const std::map<Channel, std::uint64_t>& delivered() const { return delivered_; }

private:
  struct App {
    AppSpec spec;
    DeviceHandle handle;
    AppStatus status;
  };

  wire::Response exchange(App& app, Bytes request);

  Topology topology_;
  std::chrono::milliseconds io_timeout_;
  std::vector<App> apps_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::deque<Envelope>> queues_;  // by destination
  std::map<Channel, std::uint64_t> delivered_;
  std::vector<Envelope> log_;
  State state_ = State::Running;
  std::string failed_app_;
  std::string failure_;
};

}  // namespace upm::coupling
