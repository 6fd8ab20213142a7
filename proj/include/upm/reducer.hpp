#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "upm/core_model.hpp"

// Machine descriptions and their rewriting into one single-core CPU plus a
// list of virtual devices ("general printers").
namespace upm::reducer {

struct Accelerator {
  std::string kind;  // [a-z0-9_-]{1,32}
  std::int64_t count = 1;
  friend bool operator==(const Accelerator&, const Accelerator&) = default;
};

struct SystemSpec {
  std::int64_t node_count = 1;
  std::int64_t cores_per_cpu = 1;
  std::vector<Accelerator> accelerators;
  friend bool operator==(const SystemSpec&, const SystemSpec&) = default;
};

enum class SystemType : std::uint8_t { I, I_PLUS, II, II_PLUS, III, III_PLUS, IV, IV_PLUS };
enum class Rule : std::uint8_t { StripAccel, SplitMulticore, VirtualizeCluster };

std::string_view to_string(SystemType t);  // "I", "I_PLUS", ...
std::string_view to_string(Rule r);        // "STRIP_ACCEL", ...

struct ReductionStep {
  Rule rule;
  SystemType before;
  SystemType after;
  std::vector<DeviceDescriptor> virtualized;
};

struct UpmView {
  SystemSpec base;  // always one node, one core, no accelerators
  std::vector<DeviceDescriptor> devices;
};

struct Reduction {
  UpmView view;
  std::vector<ReductionStep> trace;
};

// Throws Error(INVALID_SPEC, <field>).
void validate(const SystemSpec& s);
SystemType classify(const SystemSpec& s);
Reduction reduce(const SystemSpec& s);

// {"node_count":N,"cores_per_cpu":C|[c0,c1,...],"accelerators":[{"kind":"gpu","count":2}]}
// A per-node core list must be uniform (INVALID_SPEC "heterogeneous").
SystemSpec spec_from_json(const nlohmann::json& j);
SystemSpec parse_spec(std::string_view text);

// Line-oriented rendering used by `upm reduce`:
//   type=<input type> devices=<n>
//   device\t<name>\t<class>\t<model_id>          (one per device)
//   step\t<rule>\t<before>-><after>\t<names,...>   (with trace)
std::string format_reduction(const SystemSpec& input, const Reduction& r, bool with_trace);

}  // namespace upm::reducer
