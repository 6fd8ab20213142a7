#include "upm/reducer.hpp"

#include <map>
#include <sstream>

#include "upm/kernels.hpp"

namespace upm::reducer {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); }

bool valid_kind(std::string_view k) {
  if (k.empty() || k.size() > 32) return false;
  for (char c : k)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-')) return false;
  return true;
}

SystemType plus(SystemType base, bool accel) {
  return static_cast<SystemType>(static_cast<int>(base) + (accel ? 1 : 0));
}

DeviceDescriptor accel_device(const std::string& kind, std::int64_t index) {
  DeviceDescriptor d;
  d.name = "accel:" + kind + std::to_string(index);
  d.device_class = DeviceClass::External;
  d.model_id = kind;
  d.languages = {kind};
  d.transport = transport::Spawn{};
  d.params = {{"virtual", "true"}, {"kind", kind}};
  return d;
}

DeviceDescriptor multicore_device(std::int64_t node, std::int64_t cores) {
  DeviceDescriptor d;
  d.name = "multicore:node" + std::to_string(node) + "[" + std::to_string(cores) + "]";
  d.device_class = DeviceClass::Multicore;
  d.model_id = std::string(kernels::kKernelSetV1);
  d.languages = {std::string(kernels::kKernelSetV1)};
  d.transport = transport::InProc{};
  d.params = {{"virtual", "true"}, {"workers", std::to_string(cores)}, {"node", std::to_string(node)}};
  return d;
}

DeviceDescriptor cluster_device(std::int64_t nodes, const std::vector<DeviceDescriptor>& per_node) {
  DeviceDescriptor d;
  d.name = "cluster:all[" + std::to_string(nodes) + "]";
  d.device_class = DeviceClass::Cluster;
  d.model_id = std::string(kernels::kKernelSetV1);
  d.languages = {std::string(kernels::kKernelSetV1)};
  d.transport = transport::Spawn{{}, nodes};
  d.params = {{"virtual", "true"}};
  if (!per_node.empty()) {
    std::string names;
    for (const auto& m : per_node) names += (names.empty() ? "" : ",") + m.name;
    d.params["nodes"] = names;
  }
  return d;
}

}  // namespace

std::string_view to_string(SystemType t) {
  switch (t) {
    case SystemType::I: return "I";
    case SystemType::I_PLUS: return "I_PLUS";
    case SystemType::II: return "II";
    case SystemType::II_PLUS: return "II_PLUS";
    case SystemType::III: return "III";
    case SystemType::III_PLUS: return "III_PLUS";
    case SystemType::IV: return "IV";
    case SystemType::IV_PLUS: return "IV_PLUS";
  }
  return "?";
}

std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::StripAccel: return "STRIP_ACCEL";
    case Rule::SplitMulticore: return "SPLIT_MULTICORE";
    case Rule::VirtualizeCluster: return "VIRTUALIZE_CLUSTER";
  }
  return "?";
}

void validate(const SystemSpec& s) {
  if (s.node_count < 1) bad("node_count");
  if (s.cores_per_cpu < 1) bad("cores_per_cpu");
  for (const auto& a : s.accelerators) {
    if (!valid_kind(a.kind)) bad("accelerators.kind");
    if (a.count < 1) bad("accelerators.count");
  }
}

SystemType classify(const SystemSpec& s) {
  validate(s);
  const bool accel = !s.accelerators.empty();
  SystemType base = SystemType::I;
  if (s.node_count == 1 && s.cores_per_cpu > 1) base = SystemType::II;
  if (s.node_count > 1 && s.cores_per_cpu == 1) base = SystemType::III;
  if (s.node_count > 1 && s.cores_per_cpu > 1) base = SystemType::IV;
  return plus(base, accel);
}

Reduction reduce(const SystemSpec& s) {
  validate(s);
  Reduction out;
  SystemSpec cur = s;

  if (!cur.accelerators.empty()) {
    ReductionStep step{Rule::StripAccel, classify(cur), {}, {}};
    std::map<std::string, std::int64_t> next_index;
    for (const auto& a : cur.accelerators)
      for (std::int64_t i = 0; i < a.count; ++i) step.virtualized.push_back(accel_device(a.kind, next_index[a.kind]++));
    cur.accelerators.clear();
    step.after = classify(cur);
    out.trace.push_back(std::move(step));
  }

  std::vector<DeviceDescriptor> per_node;
  if (cur.cores_per_cpu > 1) {
    ReductionStep step{Rule::SplitMulticore, classify(cur), {}, {}};
    for (std::int64_t n = 0; n < cur.node_count; ++n) step.virtualized.push_back(multicore_device(n, cur.cores_per_cpu));
    per_node = step.virtualized;
    cur.cores_per_cpu = 1;
    step.after = classify(cur);
    out.trace.push_back(std::move(step));
  }

  if (cur.node_count > 1) {
    ReductionStep step{Rule::VirtualizeCluster, classify(cur), {}, {}};
    step.virtualized.push_back(cluster_device(cur.node_count, per_node));
    cur.node_count = 1;
    step.after = classify(cur);
    out.trace.push_back(std::move(step));
  }

  out.view.base = cur;
  for (const auto& step : out.trace)
    out.view.devices.insert(out.view.devices.end(), step.virtualized.begin(), step.virtualized.end());
  return out;
}

SystemSpec spec_from_json(const json& j) {
  if (!j.is_object()) bad("spec");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "node_count" && it.key() != "cores_per_cpu" && it.key() != "accelerators") bad("unknown field " + it.key());

  SystemSpec s;
  if (auto it = j.find("node_count"); it != j.end()) {
    if (!it->is_number_integer()) bad("node_count");
    s.node_count = it->get<std::int64_t>();
  }
  if (auto it = j.find("cores_per_cpu"); it != j.end()) {
    if (it->is_number_integer()) {
      s.cores_per_cpu = it->get<std::int64_t>();
    } else if (it->is_array()) {
      if (static_cast<std::int64_t>(it->size()) != s.node_count) bad("cores_per_cpu");
      for (const auto& c : *it) {
        if (!c.is_number_integer()) bad("cores_per_cpu");
        if (c.get<std::int64_t>() != it->front().get<std::int64_t>()) bad("heterogeneous");
      }
      s.cores_per_cpu = it->front().get<std::int64_t>();
    } else {
      bad("cores_per_cpu");
    }
  }
  if (auto it = j.find("accelerators"); it != j.end()) {
    if (!it->is_array()) bad("accelerators");
    for (const auto& a : *it) {
      if (!a.is_object()) bad("accelerators");
      Accelerator acc;
      for (auto f = a.begin(); f != a.end(); ++f) {
        if (f.key() == "kind" && f->is_string()) acc.kind = f->get<std::string>();
        else if (f.key() == "count" && f->is_number_integer()) acc.count = f->get<std::int64_t>();
        else bad("accelerators." + f.key());
      }
      s.accelerators.push_back(std::move(acc));
    }
  }
  validate(s);
  return s;
}

SystemSpec parse_spec(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) bad("json");
  return spec_from_json(j);
}

std::string format_reduction(const SystemSpec& input, const Reduction& r, bool with_trace) {
  std::ostringstream os;
  os << "type=" << to_string(classify(input)) << " devices=" << r.view.devices.size() << "\n";
  for (const auto& d : r.view.devices)
    os << "device\t" << d.name << "\t" << upm::to_string(d.device_class) << "\t" << d.model_id << "\n";
  if (with_trace) {
    for (const auto& step : r.trace) {
      os << "step\t" << to_string(step.rule) << "\t" << to_string(step.before) << "->" << to_string(step.after) << "\t";
      for (std::size_t i = 0; i < step.virtualized.size(); ++i) os << (i ? "," : "") << step.virtualized[i].name;
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace upm::reducer
