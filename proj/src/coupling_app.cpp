#include "upm/coupling_app.hpp"

#include "json.hpp"

#include "upm/core_model.hpp"

namespace upm::coupling {

using nlohmann::json;

namespace {

[[noreturn]] void bad_script(const std::string& why) { throw Error(ErrorCode::InvalidSpec, "script: " + why); }

std::string required_token(const json& a, const char* key) {
  if (!a.contains(key) || !a[key].is_string()) bad_script(std::string("missing '") + key + "'");
  auto s = a[key].get<std::string>();
  if (!is_valid_token(s)) bad_script(std::string("bad ") + key + " '" + s + "'");
  return s;
}

Bytes literal_bytes(const json& a, const char* text_key, const char* hex_key) {
  if (a.contains(text_key)) {
    if (!a[text_key].is_string()) bad_script(std::string(text_key) + " must be a string");
    return to_bytes(a[text_key].get<std::string>());
  }
  if (!a[hex_key].is_string()) bad_script(std::string(hex_key) + " must be a string");
  try {
    return from_hex(a[hex_key].get<std::string>());
  } catch (const std::invalid_argument&) {
    bad_script(std::string("bad ") + hex_key);
  }
}

void check_keys(const json& a, std::initializer_list<const char*> allowed) {
  for (auto it = a.begin(); it != a.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) bad_script("unknown field '" + it.key() + "'");
  }
}

AppStatus read_status(ByteReader& r) {
  AppStatus s;
  const auto state = r.u8();
  if (state > 1) throw Error(ErrorCode::ProtocolError, "app state");
  s.state = static_cast<AppState>(state);
  s.outbox = r.u32();
  return s;
}

}  // namespace

bool is_valid_token(std::string_view s) {
  if (s.empty() || s.size() > 64) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

AppScript parse_script(const json& j) {
  if (!j.is_array()) bad_script("must be an array");
  AppScript script;
  for (const auto& a : j) {
    if (!a.is_object() || !a.contains("op") || !a["op"].is_string()) bad_script("action needs 'op'");
    const auto op = a["op"].get<std::string>();
    Action act;
    if (op == "SEND") {
      check_keys(a, {"op", "dst", "tag", "payload", "payload_hex", "payload_from"});
      act.op = Action::Op::Send;
      act.peer = required_token(a, "dst");
      act.tag = required_token(a, "tag");
      const int sources = a.contains("payload") + a.contains("payload_hex") + a.contains("payload_from");
      if (sources != 1) bad_script("SEND needs exactly one payload source");
      if (a.contains("payload_from")) {
        const auto from = a["payload_from"].is_string() ? a["payload_from"].get<std::string>() : std::string();
        if (from == "last_received") act.source.kind = PayloadSource::Kind::LastReceived;
        else if (from == "last_result") act.source.kind = PayloadSource::Kind::LastResult;
        else bad_script("payload_from must be last_received or last_result");
      } else {
        act.source.literal = literal_bytes(a, "payload", "payload_hex");
      }
    } else if (op == "RECV") {
      check_keys(a, {"op", "src", "tag", "expect", "expect_hex"});
      act.op = Action::Op::Recv;
      act.peer = required_token(a, "src");
      act.tag = required_token(a, "tag");
      if (a.contains("expect") && a.contains("expect_hex")) bad_script("RECV takes one of expect/expect_hex");
      if (a.contains("expect") || a.contains("expect_hex")) act.expect = literal_bytes(a, "expect", "expect_hex");
    } else if (op == "COMPUTE") {
      check_keys(a, {"op", "kernel"});
      act.op = Action::Op::Compute;
      if (!a.contains("kernel") || !a["kernel"].is_string()) bad_script("COMPUTE needs 'kernel'");
      act.kernel = a["kernel"].get<std::string>();
    } else if (op == "HALT") {
      check_keys(a, {"op"});
      act.op = Action::Op::Halt;
    } else {
      bad_script("unknown op '" + op + "'");
    }
    script.push_back(std::move(act));
  }
  return script;
}

json script_to_json(const AppScript& script) {
  json out = json::array();
  for (const auto& a : script) {
    json j;
    switch (a.op) {
      case Action::Op::Send:
        j = {{"op", "SEND"}, {"dst", a.peer}, {"tag", a.tag}};
        if (a.source.kind == PayloadSource::Kind::LastReceived) j["payload_from"] = "last_received";
        else if (a.source.kind == PayloadSource::Kind::LastResult) j["payload_from"] = "last_result";
        else j["payload_hex"] = to_hex(a.source.literal);
        break;
      case Action::Op::Recv:
        j = {{"op", "RECV"}, {"src", a.peer}, {"tag", a.tag}};
        if (a.expect) j["expect_hex"] = to_hex(*a.expect);
        break;
      case Action::Op::Compute: j = {{"op", "COMPUTE"}, {"kernel", a.kernel}}; break;
      case Action::Op::Halt: j = {{"op", "HALT"}}; break;
    }
    out.push_back(std::move(j));
  }
  return out;
}

void write_envelope(ByteWriter& w, const Envelope& e) {
  w.str16(e.src).str16(e.dst).str16(e.tag).u64(e.seq).blob32(e.payload);
}

Envelope read_envelope(ByteReader& r) {
  Envelope e;
  e.src = r.str16();
  e.dst = r.str16();
  e.tag = r.str16();
  e.seq = r.u64();
  e.payload = r.blob32();
  return e;
}

namespace wire {

Bytes load(std::string_view app_id, const AppScript& script) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(Op::Load)).str16(app_id).raw(script_to_json(script).dump());
  return std::move(w).take();
}

Bytes poll(std::string_view app_id, const std::set<std::string>& full) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(Op::Poll)).str16(app_id).u32(static_cast<std::uint32_t>(full.size()));
  for (const auto& d : full) w.str16(d);
  return std::move(w).take();
}

Bytes deliver(std::string_view app_id, const Envelope& e) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(Op::Deliver)).str16(app_id);
  write_envelope(w, e);
  return std::move(w).take();
}

Bytes encode_response(const Response& r) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(r.reply)).u8(static_cast<std::uint8_t>(r.status.state)).u32(r.status.outbox);
  if (r.reply == Reply::Envelope) write_envelope(w, *r.envelope);
  return std::move(w).take();
}

Response decode_response(ByteView b) {
  try {
    ByteReader r(b);
    Response out;
    const auto reply = r.u8();
    if (reply != 'A' && reply != 'E' && reply != 'N') throw Error(ErrorCode::ProtocolError, "app reply");
    out.reply = static_cast<Reply>(reply);
    out.status = read_status(r);
    if (out.reply == Reply::Envelope) out.envelope = read_envelope(r);
    return out;
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::ProtocolError, "short app reply");
  }
}

}  // namespace wire

CouplingApp::CouplingApp(std::string app_id, AppScript script, ComputeFn compute)
    : app_id_(std::move(app_id)), script_(std::move(script)), compute_(std::move(compute)) {}

void CouplingApp::start() { run(); }

AppStatus CouplingApp::status() const {
  return AppStatus{halted_ ? AppState::Halted : AppState::Running, static_cast<std::uint32_t>(outbox_.size())};
}

std::optional<Envelope> CouplingApp::take_outbound(const std::set<std::string>& full) {
  if (outbox_.empty() || full.count(outbox_.front().dst) != 0) return std::nullopt;
  Envelope e = std::move(outbox_.front());
  outbox_.pop_front();
  return e;
}

void CouplingApp::deliver(Envelope e) {
  auto& expected = recv_seq_[{e.src, e.tag}];
  if (e.dst != app_id_) throw Error(ErrorCode::BackendFailure, "app " + app_id_ + ": misaddressed envelope for " + e.dst);
  if (e.seq != expected + 1)
    throw Error(ErrorCode::BackendFailure, "app " + app_id_ + ": sequence gap on " + e.src + "/" + e.tag + " (got " +
                                               std::to_string(e.seq) + ", want " + std::to_string(expected + 1) + ")");
  expected = e.seq;
  inbox_[{e.src, e.tag}].push_back(std::move(e));
  run();
}

void CouplingApp::run() {
  while (!halted_ && pc_ < script_.size()) {
    const Action& a = script_[pc_];
    switch (a.op) {
      case Action::Op::Send: {
        Envelope e;
        e.src = app_id_;
        e.dst = a.peer;
        e.tag = a.tag;
        e.seq = ++sent_seq_[{a.peer, a.tag}];
        switch (a.source.kind) {
          case PayloadSource::Kind::Literal: e.payload = a.source.literal; break;
          case PayloadSource::Kind::LastReceived: e.payload = last_received_; break;
          case PayloadSource::Kind::LastResult: e.payload = last_result_; break;
        }
        outbox_.push_back(std::move(e));
        break;
      }
      case Action::Op::Recv: {
        auto it = inbox_.find({a.peer, a.tag});
        if (it == inbox_.end() || it->second.empty()) return;  // blocked
        last_received_ = std::move(it->second.front().payload);
        it->second.pop_front();
        if (a.expect && *a.expect != last_received_)
          throw Error(ErrorCode::BackendFailure, "app " + app_id_ + ": payload mismatch on " + a.peer + "/" + a.tag);
        break;
      }
      case Action::Op::Compute: last_result_ = compute_(a.kernel, last_received_); break;
      case Action::Op::Halt: halted_ = true; return;
    }
    ++pc_;
  }
  halted_ = true;  // running off the end of the script halts
}

Bytes AppHost::handle(ByteView request) {
  ByteReader r(request);
  wire::Response resp;
  try {
    const auto op = r.u8();
    const std::string app_id = r.str16();
    if (op == static_cast<std::uint8_t>(wire::Op::Load)) {
      auto script = parse_script(json::parse(to_string(r.rest())));
      auto app = std::make_unique<CouplingApp>(app_id, std::move(script), compute_);
      auto* raw = app.get();
      apps_[app_id] = std::move(app);
      raw->start();
      resp.reply = wire::Reply::Ack;
      resp.status = raw->status();
      return wire::encode_response(resp);
    }
    auto it = apps_.find(app_id);
    if (it == apps_.end()) throw Error(ErrorCode::BackendFailure, "no app '" + app_id + "' loaded");
    CouplingApp& app = *it->second;
    if (op == static_cast<std::uint8_t>(wire::Op::Poll)) {
      std::set<std::string> full;
      for (auto n = r.u32(); n > 0; --n) full.insert(r.str16());
      resp.envelope = app.take_outbound(full);
      resp.reply = resp.envelope ? wire::Reply::Envelope : wire::Reply::Nothing;
    } else if (op == static_cast<std::uint8_t>(wire::Op::Deliver)) {
      app.deliver(read_envelope(r));
      resp.reply = wire::Reply::Ack;
    } else {
      throw Error(ErrorCode::ProtocolError, "app op");
    }
    resp.status = app.status();
    return wire::encode_response(resp);
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::ProtocolError, "short app request");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("script: ") + e.what());
  }
}

}  // namespace upm::coupling
