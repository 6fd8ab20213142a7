#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "upm/core_model.hpp"

namespace upm {

// Manifest <-> descriptor. A manifest is a JSON object with exactly these keys:
//   name, class, model_id, transport            (required)
//   languages, speed_factor, params             (optional)
// transport: {"kind":"INPROC"} | {"kind":"SPAWN","command":[...][,"ranks":N]}
//          | {"kind":"CONNECT","address":"host:port"}
// speed_factor: number or string ("3/4", "1.5"); params: string -> string.
// Throws Error(INVALID_MANIFEST, <field or rule>).
DeviceDescriptor manifest_from_json(const nlohmann::json& j);
DeviceDescriptor parse_manifest(std::string_view text);
nlohmann::json manifest_to_json(const DeviceDescriptor& d);

// Installed devices, persisted as a JSON array of manifests. Lookups may run
// concurrently; mutations are serialized and become visible only after the
// file has been replaced.
class Registry {
public:
  // Loads `path` if it exists; a missing file is an empty registry.
  explicit Registry(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }

  DeviceDescriptor install(const DeviceDescriptor& d);  // INVALID_MANIFEST, ALREADY_INSTALLED
  DeviceDescriptor install(std::string_view manifest_text);
  void uninstall(std::string_view name);               // NOT_INSTALLED
  DeviceDescriptor lookup(std::string_view name) const;  // NOT_INSTALLED
  std::vector<DeviceDescriptor> list() const;            // sorted by name

  // Re-reads the file, replacing the in-memory set.
  void reload();

private:
  using Map = std::map<std::string, DeviceDescriptor, std::less<>>;
  static Map load(const std::filesystem::path& path);
  void persist(const Map& m) const;

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  Map devices_;
};

// --registry flag, else $UPM_REGISTRY, else $XDG_CONFIG_HOME/upm/registry.json,
// else ~/.config/upm/registry.json.
std::filesystem::path default_registry_path(const std::optional<std::string>& flag = std::nullopt);

}  // namespace upm
