#include "upm/registry.hpp"

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace upm {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidManifest, what); }

const std::string& need_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) bad(key);
  return it->get_ref<const std::string&>();
}

void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known) bad(where + it.key());
  }
}

Rational speed_from_json(const json& v) {
  try {
    if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
    if (v.is_number_float()) return Rational::from_double(v.get<double>());
    if (v.is_string()) return Rational::parse(v.get<std::string>());
  } catch (const std::exception&) {
  }
  bad("speed_factor");
}

TransportSpec transport_from_json(const json& t) {
  if (!t.is_object()) bad("transport");
  const std::string& kind = need_string(t, "kind");
  if (kind == "INPROC") {
    only_keys(t, {"kind"}, "transport.");
    return transport::InProc{};
  }
  if (kind == "SPAWN") {
    only_keys(t, {"kind", "command", "ranks"}, "transport.");
    transport::Spawn s;
    auto cmd = t.find("command");
    if (cmd == t.end() || !cmd->is_array()) bad("command");
    for (const auto& a : *cmd) {
      if (!a.is_string()) bad("command");
      s.command.push_back(a.get<std::string>());
    }
    if (auto r = t.find("ranks"); r != t.end()) {
      if (!r->is_number_integer()) bad("ranks");
      s.ranks = r->get<std::int64_t>();
    }
    return s;
  }
  if (kind == "CONNECT") {
    only_keys(t, {"kind", "address"}, "transport.");
    return transport::Connect{need_string(t, "address")};
  }
  bad("transport.kind");
}

json transport_to_json(const TransportSpec& t) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, transport::InProc>) {
          return {{"kind", "INPROC"}};
        } else if constexpr (std::is_same_v<T, transport::Spawn>) {
          json j = {{"kind", "SPAWN"}, {"command", v.command}};
          if (v.ranks) j["ranks"] = *v.ranks;
          return j;
        } else {
          return {{"kind", "CONNECT"}, {"address", v.address}};
        }
      },
      t);
}

}  // namespace

DeviceDescriptor manifest_from_json(const json& j) {
  if (!j.is_object()) bad("manifest");
  only_keys(j, {"name", "class", "model_id", "languages", "speed_factor", "transport", "params"}, "unknown field ");

  DeviceDescriptor d;
  d.name = need_string(j, "name");
  const auto cls = device_class_from_string(need_string(j, "class"));
  if (!cls) bad("class");
  d.device_class = *cls;
  d.model_id = need_string(j, "model_id");

  if (auto it = j.find("languages"); it != j.end()) {
    if (!it->is_array()) bad("languages");
    for (const auto& l : *it) {
      if (!l.is_string()) bad("languages");
      d.languages.insert(l.get<std::string>());
    }
  }
  if (auto it = j.find("speed_factor"); it != j.end()) d.speed_factor = speed_from_json(*it);
  auto t = j.find("transport");
  if (t == j.end()) bad("transport");
  d.transport = transport_from_json(*t);
  if (auto it = j.find("params"); it != j.end()) {
    if (!it->is_object()) bad("params");
    for (auto p = it->begin(); p != it->end(); ++p) {
      if (!p->is_string()) bad("params." + p.key());
      d.params[p.key()] = p->get<std::string>();
    }
  }
  validate_descriptor(d);
  return d;
}

DeviceDescriptor parse_manifest(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) bad("json");
  return manifest_from_json(j);
}

json manifest_to_json(const DeviceDescriptor& d) {
  json j;
  j["name"] = d.name;
  j["class"] = std::string(to_string(d.device_class));
  j["model_id"] = d.model_id;
  j["languages"] = d.languages;
  j["speed_factor"] = d.speed_factor.to_string();
  j["transport"] = transport_to_json(d.transport);
  j["params"] = d.params;
  return j;
}

Registry::Registry(std::filesystem::path path) : path_(std::move(path)), devices_(load(path_)) {}

Registry::Map Registry::load(const std::filesystem::path& path) {
  Map m;
  std::ifstream in(path);
  if (!in) return m;
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.is_array()) bad("registry file " + path.string());
  for (const auto& entry : j) {
    auto d = manifest_from_json(entry);
    const std::string name = d.name;
    if (!m.emplace(name, std::move(d)).second) bad("registry file duplicate " + name);
  }
  return m;
}

void Registry::persist(const Map& m) const {
  json arr = json::array();
  for (const auto& [name, d] : m) arr.push_back(manifest_to_json(d));
  std::error_code ec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
  auto tmp = path_;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << arr.dump(2) << "\n";
    out.flush();
    if (!out) throw Error(ErrorCode::InvalidManifest, "cannot write registry " + path_.string());
  }
  std::filesystem::rename(tmp, path_, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::InvalidManifest, "cannot write registry " + path_.string());
  }
}

DeviceDescriptor Registry::install(const DeviceDescriptor& d) {
  validate_descriptor(d);
  std::unique_lock lock(mu_);
  if (devices_.count(d.name) != 0) throw Error(ErrorCode::AlreadyInstalled, d.name);
  Map next = devices_;
  next.emplace(d.name, d);
  persist(next);
  devices_ = std::move(next);
  return d;
}

DeviceDescriptor Registry::install(std::string_view manifest_text) { return install(parse_manifest(manifest_text)); }

void Registry::uninstall(std::string_view name) {
  std::unique_lock lock(mu_);
  auto it = devices_.find(name);
  if (it == devices_.end()) throw Error(ErrorCode::NotInstalled, std::string(name));
  Map next = devices_;
  next.erase(std::string(name));
  persist(next);
  devices_ = std::move(next);
}

DeviceDescriptor Registry::lookup(std::string_view name) const {
  std::shared_lock lock(mu_);
  auto it = devices_.find(name);
  if (it == devices_.end()) throw Error(ErrorCode::NotInstalled, std::string(name));
  return it->second;
}

std::vector<DeviceDescriptor> Registry::list() const {
  std::shared_lock lock(mu_);
  std::vector<DeviceDescriptor> out;
  out.reserve(devices_.size());
  for (const auto& [name, d] : devices_) out.push_back(d);
  return out;
}

void Registry::reload() {
  auto m = load(path_);
  std::unique_lock lock(mu_);
  devices_ = std::move(m);
}

std::filesystem::path default_registry_path(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("UPM_REGISTRY"); env != nullptr && *env != '\0') return env;
  if (const char* xdg = std::getenv("XDG_CONFIG_HOME"); xdg != nullptr && *xdg != '\0')
    return std::filesystem::path(xdg) / "upm" / "registry.json";
  const char* home = std::getenv("HOME");
  return std::filesystem::path(home != nullptr ? home : ".") / ".config" / "upm" / "registry.json";
}

}  // namespace upm
