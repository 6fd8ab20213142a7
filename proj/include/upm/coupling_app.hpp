#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "upm/bytes.hpp"

// The application side of a coupling: a declarative script executed inside a
// CLUSTER device (model "coupling-app"), plus the message format the
// coordinator uses to talk to it through ordinary file writes and reads.
namespace upm::coupling {

struct PayloadSource {
  enum class Kind : std::uint8_t { Literal, LastReceived, LastResult };
  Kind kind = Kind::Literal;
  Bytes literal;
  friend bool operator==(const PayloadSource&, const PayloadSource&) = default;
};

struct Action {
  enum class Op : std::uint8_t { Send, Recv, Compute, Halt };
  Op op = Op::Halt;
  std::string peer;  // dst for SEND, src for RECV
  std::string tag;
  PayloadSource source;         // SEND
  std::optional<Bytes> expect;  // RECV: fail the app if the payload differs
  std::string kernel;           // COMPUTE: applied to the last received payload
  friend bool operator==(const Action&, const Action&) = default;
};

using AppScript = std::vector<Action>;

// JSON form: [{"op":"SEND","dst":"B","tag":"t","payload":"text"|"payload_hex":"..."|
//              "payload_from":"last_received"|"last_result"},
//             {"op":"RECV","src":"A","tag":"t"[,"expect":".."|"expect_hex":".."]},
//             {"op":"COMPUTE","kernel":"vecsum64"}, {"op":"HALT"}]
// Throws Error(INVALID_SPEC, "script").
AppScript parse_script(const nlohmann::json& j);
nlohmann::json script_to_json(const AppScript& script);

bool is_valid_token(std::string_view s);  // app ids and tags: [A-Za-z0-9_.-]{1,64}

struct Envelope {
  std::string src;
  std::string dst;
  std::string tag;
  std::uint64_t seq = 0;  // per (src, dst, tag), from 1
  Bytes payload;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

void write_envelope(ByteWriter& w, const Envelope& e);
Envelope read_envelope(ByteReader& r);

enum class AppState : std::uint8_t { Running = 0, Halted = 1 };

struct AppStatus {
  AppState state = AppState::Running;
  std::uint32_t outbox = 0;
  friend bool operator==(const AppStatus&, const AppStatus&) = default;
};

// Coordinator <-> app messages (payloads of writes/reads on a coupling-app handle).
namespace wire {

enum class Op : std::uint8_t { Load = 'L', Poll = 'P', Deliver = 'D' };
enum class Reply : std::uint8_t { Ack = 'A', Envelope = 'E', Nothing = 'N' };

Bytes load(std::string_view app_id, const AppScript& script);
// `full` lists destinations whose coordinator queues are at their bound.
Bytes poll(std::string_view app_id, const std::set<std::string>& full);
Bytes deliver(std::string_view app_id, const Envelope& e);

struct Response {
  Reply reply = Reply::Nothing;
  AppStatus status;
  std::optional<Envelope> envelope;
};
Bytes encode_response(const Response& r);
Response decode_response(ByteView b);  // throws Error(PROTOCOL_ERROR)

}  // namespace wire

// Interprets one app's script. Execution is driven entirely by incoming
// messages: the script runs eagerly until it blocks on a RECV or halts, so
// the app's state after each message is a deterministic function of the
// message sequence.
class CouplingApp {
public:
  using ComputeFn = std::function<Bytes(std::string_view kernel, ByteView input)>;

  CouplingApp(std::string app_id, AppScript script, ComputeFn compute);

  void start();
  AppStatus status() const;
  // Removes and returns the head of the outbox unless its destination is in `full`.
  std::optional<Envelope> take_outbound(const std::set<std::string>& full);
  // Throws Error(BACKEND_FAILURE) on a sequence gap or a failed expectation.
  void deliver(Envelope e);

private:
  void run();

  std::string app_id_;
  AppScript script_;
  ComputeFn compute_;
  std::size_t pc_ = 0;
  bool halted_ = false;
  std::deque<Envelope> outbox_;
  std::map<std::pair<std::string, std::string>, std::deque<Envelope>> inbox_;  // (src, tag)
  std::map<std::pair<std::string, std::string>, std::uint64_t> sent_seq_;  // (dst, tag)
  std::map<std::pair<std::string, std::string>, std::uint64_t> recv_seq_;  // (src, tag)
  Bytes last_received_;
  Bytes last_result_;
};

// All apps hosted by one cluster device, keyed by app id.
class AppHost {
public:
  explicit AppHost(CouplingApp::ComputeFn compute) : compute_(std::move(compute)) {}
  // Handles one wire request; throws Error on failure.
  Bytes handle(ByteView request);

private:
  CouplingApp::ComputeFn compute_;
  std::map<std::string, std::unique_ptr<CouplingApp>> apps_;
};

}  // namespace upm::coupling
