#include "upm/coupler.hpp"

#include <set>
#include <sstream>

#include "upm/kernels.hpp"

namespace upm::coupling {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); }

}  // namespace

Topology topology_from_json(const json& j) {
  if (!j.is_object()) bad("topology");
  Topology t;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "buffer_bound") {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 1) bad("buffer_bound");
      t.buffer_bound = it->get<std::size_t>();
    } else if (it.key() == "apps") {
      if (!it->is_array()) bad("apps");
      for (const auto& a : *it) {
        if (!a.is_object()) bad("apps");
        AppSpec spec;
        bool have_script = false;
        for (auto f = a.begin(); f != a.end(); ++f) {
          if (f.key() == "app_id" && f->is_string()) {
            spec.app_id = f->get<std::string>();
          } else if (f.key() == "device" && f->is_string()) {
            spec.device = f->get<std::string>();
          } else if (f.key() == "script") {
            spec.script = parse_script(*f);
            have_script = true;
          } else {
            bad("apps." + f.key());
          }
        }
        if (!have_script) bad("script");
        t.apps.push_back(std::move(spec));
      }
    } else {
      bad("unknown field " + it.key());
    }
  }
  return t;
}

Topology parse_topology(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) bad("json");
  return topology_from_json(j);
}

std::string_view to_string(FinalState s) {
  switch (s) {
    case FinalState::Quiescent: return "QUIESCENT";
    case FinalState::Stalled: return "STALLED";
    case FinalState::Failed: return "FAILED";
  }
  return "?";
}

std::string format_report(const QuiescenceReport& r) {
  std::ostringstream os;
  for (const auto& [ch, n] : r.delivered)
    os << "channel " << std::get<0>(ch) << " " << std::get<1>(ch) << " " << std::get<2>(ch) << " " << n << "\n";
  os << "state=" << to_string(r.state) << "\n";
  return os.str();
}

Coordinator::Coordinator(Runtime& runtime, Topology topology, std::chrono::milliseconds io_timeout)
    : topology_(std::move(topology)), io_timeout_(io_timeout) {
  if (topology_.buffer_bound < 1) bad("buffer_bound");
  std::set<std::string> ids;
  for (const auto& a : topology_.apps) {
    if (!is_valid_token(a.app_id) || !ids.insert(a.app_id).second) bad("app_id");
  }
  for (const auto& a : topology_.apps) {
    for (const auto& act : a.script)
      if ((act.op == Action::Op::Send || act.op == Action::Op::Recv) && ids.count(act.peer) == 0)
        bad("script: unknown app " + act.peer);
    const auto d = runtime.registry().lookup(a.device);
    if (d.device_class != DeviceClass::Cluster) bad("class");
    if (!kernels::model_hosts(d.model_id, kernels::kCouplingApp)) bad("model");
  }

  try {
    for (const auto& a : topology_.apps) {
      index_[a.app_id] = apps_.size();
      auto h = runtime.open("upm://" + a.device + "?model=" + std::string(kernels::kCouplingApp));
      apps_.push_back(App{a, std::move(h), {}});
      queues_[a.app_id];
    }
    for (auto& app : apps_) {
      auto r = exchange(app, wire::load(app.spec.app_id, app.spec.script));
      if (r.reply != wire::Reply::Ack) throw Error(ErrorCode::BackendFailure, "load " + app.spec.app_id);
    }
  } catch (const Error& e) {
    shutdown();
    if (e.code() == ErrorCode::InvalidSpec || e.code() == ErrorCode::NotInstalled) throw;
    throw Error(ErrorCode::BackendFailure, e.detail().empty() ? std::string(e.name()) : e.detail());
  }
}

Coordinator::~Coordinator() { shutdown(); }

wire::Response Coordinator::exchange(App& app, Bytes request) {
  try {
    app.handle.write(std::move(request));
    auto r = wire::decode_response(app.handle.read(io_timeout_));
    app.status = r.status;
    return r;
  } catch (const Error& e) {
    state_ = State::Failed;
    failed_app_ = app.spec.app_id;
    failure_ = e.detail().empty() ? "device error" : e.detail();
    throw Error(ErrorCode::BackendFailure, app.spec.app_id + ": " + failure_);
  }
}

bool Coordinator::relay_step() {
  if (state_ != State::Running) throw Error(ErrorCode::BackendFailure, failed_app_.empty() ? "not running" : failed_app_);
  bool progressed = false;

  // step 1 + 2: at most one envelope out of each app, queued for its destination
  for (auto& app : apps_) {
    if (app.status.outbox == 0) continue;
    std::set<std::string> full;
    for (const auto& [dst, q] : queues_)
      if (q.size() >= topology_.buffer_bound) full.insert(dst);
    auto r = exchange(app, wire::poll(app.spec.app_id, full));
    if (r.reply != wire::Reply::Envelope || !r.envelope) continue;
    auto q = queues_.find(r.envelope->dst);
    if (q == queues_.end()) {
      state_ = State::Failed;
      failed_app_ = app.spec.app_id;
      failure_ = "envelope for unknown app " + r.envelope->dst;
      throw Error(ErrorCode::BackendFailure, app.spec.app_id + ": " + failure_);
    }
    q->second.push_back(std::move(*r.envelope));
    progressed = true;
  }

  // step 3: at most one queued envelope into each destination
  for (auto& app : apps_) {
    auto& q = queues_[app.spec.app_id];
    if (q.empty()) continue;
    Envelope e = std::move(q.front());
    q.pop_front();
    exchange(app, wire::deliver(app.spec.app_id, e));
    ++delivered_[Channel{e.src, e.dst, e.tag}];
    log_.push_back(std::move(e));
    progressed = true;
  }
  return progressed;
}

bool Coordinator::quiescent() const {
  for (const auto& app : apps_)
    if (app.status.state != AppState::Halted || app.status.outbox != 0) return false;
  for (const auto& [dst, q] : queues_)
    if (!q.empty()) return false;
  return true;
}

QuiescenceReport Coordinator::run_until_quiescent(std::size_t max_steps) {
  QuiescenceReport report;
  auto finish = [&](FinalState s) {
    report.state = s;
    report.delivered = delivered_;
    report.failed_app = failed_app_;
    report.detail = failure_;
    return report;
  };
  if (state_ == State::Failed) return finish(FinalState::Failed);
  while (report.steps < max_steps) {
    bool progressed = false;
    try {
      progressed = relay_step();
    } catch (const Error&) {
      ++report.steps;
      return finish(FinalState::Failed);
    }
    ++report.steps;
    if (quiescent()) return finish(FinalState::Quiescent);
    // apps only act on delivered messages, so a pass that moves nothing
    // leaves the system exactly as it was
    if (!progressed) return finish(FinalState::Stalled);
  }
  return finish(FinalState::Stalled);
}

void Coordinator::shutdown() {
  for (auto& app : apps_) app.handle.close();
  if (state_ == State::Running) state_ = State::Closed;
}

std::size_t Coordinator::open_handles() const {
  std::size_t n = 0;
  for (const auto& app : apps_) n += app.handle.is_open() ? 1 : 0;
  return n;
}

}  // namespace upm::coupling
