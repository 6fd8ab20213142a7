#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "upm/bytes.hpp"
#include "upm/core_model.hpp"
#include "upm/net.hpp"
#include "upm/reducer.hpp"
#include "upm/registry.hpp"
#include "upm/scheduler.hpp"

namespace testing {

std::string tool(const std::string& name);  // path of a built tool binary
std::string fixture(const std::string& name);
std::string golden(const std::string& name);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

// A registry in a private temp directory.
struct Scratch {
  upm::net::TempDir dir{"upm-test"};
  upm::Registry registry{dir.path() + "/registry.json"};
  std::string path(const std::string& leaf) const { return dir.path() + "/" + leaf; }
};

upm::DeviceDescriptor echo_device(const std::string& name = "echo0");
upm::DeviceDescriptor multicore_device(const std::string& name, std::size_t workers,
                                       const std::string& model = "kernelset-v1");
upm::DeviceDescriptor cluster_device(const std::string& name, int ranks, const std::string& model = "kernelset-v1");
upm::DeviceDescriptor plugin_device(const std::string& name, const std::string& model,
                                    const std::vector<std::string>& extra_args = {});

upm::Bytes random_bytes(std::mt19937_64& rng, std::size_t n);
upm::Bytes random_floats(std::mt19937_64& rng, std::size_t count);
upm::Bytes random_u32s(std::mt19937_64& rng, std::size_t count);
upm::Bytes random_text(std::mt19937_64& rng, std::size_t approx_len);
// A random valid payload for a built-in kernel.
upm::Bytes random_payload(std::mt19937_64& rng, const std::string& kernel);

upm::reducer::SystemSpec random_spec(std::mt19937_64& rng);

struct Instance {
  std::vector<upm::scheduler::JobSpec> jobs;
  std::vector<upm::DeviceDescriptor> devices;
};
// Jobs over a few languages and models, devices with mixed capabilities. With
// identical_speed every device has speed 1 and hosts every job.
Instance random_instance(std::mt19937_64& rng, std::size_t max_jobs, std::size_t max_devices, bool identical_speed);

struct ProcResult {
  int rc = -1;
  std::string out;
  std::string err;
};
ProcResult run_cmd(const std::vector<std::string>& argv, const std::string& input = {},
                   const std::map<std::string, std::string>& env = {});

}  // namespace testing
