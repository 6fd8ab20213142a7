#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <random>
#include <set>

#include "support.hpp"
#include "upm/registry.hpp"

using namespace upm;

namespace {

const char* kEcho = R"({"name":"echo0","class":"ECHO","model_id":"echo","languages":["kernelset-v1"],
                        "speed_factor":1,"transport":{"kind":"INPROC"}})";

ErrorCode code_of(const std::function<void()>& fn, std::string* detail = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (detail) *detail = e.detail();
    return e.code();
  }
  FAIL("no error");
  return ErrorCode::BackendFailure;
}

}  // namespace

TEST_CASE("install, lookup, list, uninstall") {
  testing::Scratch s;
  CHECK(s.registry.list().empty());
  CHECK(code_of([&] { s.registry.lookup("echo0"); }) == ErrorCode::NotInstalled);

  const auto d = s.registry.install(kEcho);
  CHECK(d.name == "echo0");
  CHECK(s.registry.list().size() == 1);
  CHECK(s.registry.lookup("echo0") == d);
  CHECK(s.registry.lookup("echo0") == s.registry.lookup("echo0"));
  CHECK(code_of([&] { s.registry.install(kEcho); }) == ErrorCode::AlreadyInstalled);

  s.registry.uninstall("echo0");
  CHECK(code_of([&] { s.registry.lookup("echo0"); }) == ErrorCode::NotInstalled);
  CHECK(code_of([&] { s.registry.uninstall("nope"); }) == ErrorCode::NotInstalled);
  CHECK(s.registry.install(kEcho) == d);
}

TEST_CASE("list is sorted by name") {
  testing::Scratch s;
  s.registry.install(testing::echo_device("b"));
  s.registry.install(testing::echo_device("a"));
  const auto l = s.registry.list();
  REQUIRE(l.size() == 2);
  CHECK(l[0].name == "a");
  CHECK(l[1].name == "b");
}

TEST_CASE("manifest validation is strict") {
  std::string why;
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"ECHO","model_id":"echo","speed_factor":0,
                                          "transport":{"kind":"INPROC"}})"); }, &why) == ErrorCode::InvalidManifest);
  CHECK(why == "speed_factor");
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"ECHO","model_id":"echo","transport":{"kind":"INPROC"},
                                          "colour":"red"})"); }, &why) == ErrorCode::InvalidManifest);
  CHECK(why == "unknown field colour");
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"GPU","model_id":"echo","transport":{"kind":"INPROC"}})"); },
                &why) == ErrorCode::InvalidManifest);
  CHECK(why == "class");
  CHECK(code_of([&] { parse_manifest("{not json"); }, &why) == ErrorCode::InvalidManifest);
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"ECHO","model_id":"echo"})"); }, &why) ==
        ErrorCode::InvalidManifest);
  CHECK(why == "transport");
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"ECHO","model_id":"echo",
                                          "transport":{"kind":"INPROC","extra":1}})"); }, &why) ==
        ErrorCode::InvalidManifest);
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"EXTERNAL","model_id":"echo",
                                          "transport":{"kind":"INPROC"}})"); }, &why) == ErrorCode::InvalidManifest);
  CHECK(why == "transport/class");
  CHECK(code_of([&] { parse_manifest(R"({"name":"e","class":"ECHO","model_id":"echo","transport":{"kind":"INPROC"},
                                          "params":{"workers":4}})"); }, &why) == ErrorCode::InvalidManifest);
}

TEST_CASE("manifest fields survive a round trip") {
  const auto d = parse_manifest(R"({"name":"clu","class":"CLUSTER","model_id":"kernelset-v1",
      "languages":["kernelset-v1","mpi"],"speed_factor":"3/2",
      "transport":{"kind":"SPAWN","command":["w","--x"],"ranks":4},"params":{"job_timeout_ms":"100"}})");
  CHECK(d.speed_factor == Rational(3, 2));
  CHECK(d.languages.size() == 2);
  CHECK(std::get<transport::Spawn>(d.transport).ranks == 4);
  CHECK(manifest_from_json(manifest_to_json(d)) == d);
  CHECK(parse_manifest(R"({"name":"x","class":"ECHO","model_id":"echo","speed_factor":0.1,
                          "transport":{"kind":"INPROC"}})").speed_factor == Rational(1, 10));
  const auto ext = parse_manifest(R"({"name":"gpu0","class":"EXTERNAL","model_id":"echo",
                                     "transport":{"kind":"CONNECT","address":"127.0.0.1:9000"}})");
  CHECK(std::get<transport::Connect>(ext.transport).address == "127.0.0.1:9000");
}

TEST_CASE("persisted state reloads exactly") {
  testing::Scratch s;
  s.registry.install(testing::echo_device("a"));
  s.registry.install(testing::cluster_device("c", 3));
  s.registry.install(testing::plugin_device("p", "echo"));
  Registry fresh(s.registry.path());
  CHECK(fresh.list() == s.registry.list());
  s.registry.uninstall("c");
  fresh.reload();
  CHECK(fresh.list() == s.registry.list());
}

TEST_CASE("randomized install/uninstall against a set oracle") {
  testing::Scratch s;
  std::mt19937_64 rng(12);
  std::set<std::string> model;
  for (int i = 0; i < 300; ++i) {
    const std::string name = "d" + std::to_string(rng() % 20);
    if (rng() % 2 == 0) {
      const bool fresh = model.insert(name).second;
      if (fresh) s.registry.install(testing::echo_device(name));
      else CHECK(code_of([&] { s.registry.install(testing::echo_device(name)); }) == ErrorCode::AlreadyInstalled);
    } else {
      const bool present = model.erase(name) == 1;
      if (present) s.registry.uninstall(name);
      else CHECK(code_of([&] { s.registry.uninstall(name); }) == ErrorCode::NotInstalled);
    }
    REQUIRE(s.registry.list().size() == model.size());
  }
  std::vector<std::string> names;
  for (const auto& d : Registry(s.registry.path()).list()) names.push_back(d.name);
  CHECK(names == std::vector<std::string>(model.begin(), model.end()));
}

TEST_CASE("install, uninstall, install leaves the same file") {
  testing::Scratch s;
  s.registry.install(kEcho);
  const auto once = testing::read_file(s.registry.path());
  s.registry.uninstall("echo0");
  s.registry.install(kEcho);
  CHECK(testing::read_file(s.registry.path()) == once);
}

TEST_CASE("a corrupt registry file is reported") {
  testing::Scratch s;
  testing::write_file(s.path("bad.json"), "[{\"name\": 1}]");
  CHECK(code_of([&] { Registry r(s.path("bad.json")); }) == ErrorCode::InvalidManifest);
}

TEST_CASE("registry path precedence: flag, environment, config dir") {
  ::setenv("UPM_REGISTRY", "/tmp/from-env.json", 1);
  CHECK(default_registry_path(std::string("/tmp/flag.json")) == "/tmp/flag.json");
  CHECK(default_registry_path() == "/tmp/from-env.json");
  ::unsetenv("UPM_REGISTRY");
  ::setenv("XDG_CONFIG_HOME", "/tmp/xdg", 1);
  CHECK(default_registry_path() == "/tmp/xdg/upm/registry.json");
  ::unsetenv("XDG_CONFIG_HOME");
  ::setenv("HOME", "/tmp/home", 1);
  CHECK(default_registry_path() == "/tmp/home/.config/upm/registry.json");
}

TEST_CASE("concurrent lookups during mutations") {
  testing::Scratch s;
  s.registry.install(testing::echo_device("stable"));
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!stop) {
      if (s.registry.lookup("stable").name != "stable") ++bad;
      (void)s.registry.list();
    }
  });
  for (int i = 0; i < 50; ++i) {
    s.registry.install(testing::echo_device("x" + std::to_string(i)));
    s.registry.uninstall("x" + std::to_string(i));
  }
  stop = true;
  reader.join();
  CHECK(bad == 0);
  CHECK(s.registry.list().size() == 1);
}
