#include "support.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace testing {

std::string tool(const std::string& name) { return std::string(UPM_TOOLS_DIR) + "/" + name; }
std::string fixture(const std::string& name) { return std::string(UPM_TESTS_DIR) + "/fixtures/" + name; }
std::string golden(const std::string& name) { return std::string(UPM_TESTS_DIR) + "/golden/" + name; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
}

upm::DeviceDescriptor echo_device(const std::string& name) {
  upm::DeviceDescriptor d;
  d.name = name;
  d.device_class = upm::DeviceClass::Echo;
  d.model_id = "echo";
  d.languages = {"kernelset-v1"};
  return d;
}

upm::DeviceDescriptor multicore_device(const std::string& name, std::size_t workers, const std::string& model) {
  upm::DeviceDescriptor d;
  d.name = name;
  d.device_class = upm::DeviceClass::Multicore;
  d.model_id = model;
  d.languages = {"kernelset-v1"};
  d.params["workers"] = std::to_string(workers);
  return d;
}

upm::DeviceDescriptor cluster_device(const std::string& name, int ranks, const std::string& model) {
  upm::DeviceDescriptor d;
  d.name = name;
  d.device_class = upm::DeviceClass::Cluster;
  d.model_id = model;
  d.languages = {"kernelset-v1"};
  d.transport = upm::transport::Spawn{{tool("upm-cluster-worker")}, ranks};
  return d;
}

upm::DeviceDescriptor plugin_device(const std::string& name, const std::string& model,
                                    const std::vector<std::string>& extra_args) {
  upm::DeviceDescriptor d;
  d.name = name;
  d.device_class = upm::DeviceClass::External;
  d.model_id = model;
  d.languages = {"kernelset-v1"};
  std::vector<std::string> cmd{tool("upm-echo-plugin"), "--model", model};
  cmd.insert(cmd.end(), extra_args.begin(), extra_args.end());
  d.transport = upm::transport::Spawn{cmd, std::nullopt};
  return d;
}

upm::Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  upm::Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

upm::Bytes random_floats(std::mt19937_64& rng, std::size_t count) {
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-20, 20);
  upm::ByteWriter w(count * 8);
  for (std::size_t i = 0; i < count; ++i) w.f64(std::ldexp(mant(rng), expo(rng)));
  return std::move(w).take();
}

upm::Bytes random_u32s(std::mt19937_64& rng, std::size_t count) {
  upm::ByteWriter w(count * 4);
  for (std::size_t i = 0; i < count; ++i) w.u32(static_cast<std::uint32_t>(rng() % (i % 3 == 0 ? 50 : 0xFFFFFFFFull)));
  return std::move(w).take();
}

upm::Bytes random_text(std::mt19937_64& rng, std::size_t approx_len) {
  static const char* pieces[] = {"a", "word", "x", " ", "  ", "\n", "\t", "\r\n", "\xc3\xa9t\xc3\xa9", "\xe6\x97\xa5",
                                 "\xf0\x9f\x99\x82", "zz", "\v", "\f", "longerword"};
  std::string s;
  while (s.size() < approx_len) s += pieces[rng() % std::size(pieces)];
  return upm::to_bytes(s);
}

upm::Bytes random_payload(std::mt19937_64& rng, const std::string& kernel) {
  // sizes straddle the vecsum chunk and typical shard boundaries
  const std::size_t n = rng() % 4 == 0 ? rng() % 16 : rng() % 12000;
  if (kernel == "vecsum64") return random_floats(rng, n);
  if (kernel == "sortu32") return random_u32s(rng, n);
  if (kernel == "wordcount") return random_text(rng, n);
  return random_bytes(rng, n);
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

}  // namespace

ProcResult run_cmd(const std::vector<std::string>& argv, const std::string& input,
                   const std::map<std::string, std::string>& env) {
  upm::net::TempDir tmp("upm-cmd");
  const std::string in = tmp.path() + "/in", out = tmp.path() + "/out", err = tmp.path() + "/err";
  write_file(in, input);
  std::string cmd;
  for (const auto& [k, v] : env) cmd += k + "=" + quote(v) + " ";
  for (const auto& a : argv) cmd += quote(a) + " ";
  cmd += "<" + quote(in) + " >" + quote(out) + " 2>" + quote(err);
  const int status = std::system(cmd.c_str());
  ProcResult r;
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

upm::reducer::SystemSpec random_spec(std::mt19937_64& rng) {
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  upm::reducer::SystemSpec s;
  s.node_count = pick(0, 1) ? 1 : pick(1, 64);
  s.cores_per_cpu = pick(0, 1) ? 1 : pick(1, 128);
  const auto kinds = pick(0, 1) ? 0 : pick(1, 4);
  static const char* names[] = {"gpu", "fpga", "dsp", "tpu_2", "x-1"};
  for (std::int64_t i = 0; i < kinds; ++i)
    s.accelerators.push_back({names[pick(0, 4)], pick(1, 6)});
  return s;
}

Instance random_instance(std::mt19937_64& rng, std::size_t max_jobs, std::size_t max_devices, bool identical_speed) {
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  static const char* models[] = {"echo", "vecsum64", "sortu32", "wordcount"};
  static const char* langs[] = {"kernelset-v1", "cuda"};
  Instance in;
  const auto m = static_cast<std::size_t>(pick(1, static_cast<std::int64_t>(max_devices)));
  for (std::size_t i = 0; i < m; ++i) {
    upm::DeviceDescriptor d;
    d.name = "d" + std::to_string(pick(0, 99)) + "-" + std::to_string(i);
    d.device_class = upm::DeviceClass::Multicore;
    d.transport = upm::transport::InProc{};
    if (identical_speed) {
      d.model_id = "kernelset-v1";
      d.languages = {"kernelset-v1", "cuda"};
    } else {
      d.model_id = pick(0, 2) ? "kernelset-v1" : models[pick(0, 3)];
      d.languages = {langs[pick(0, 1)]};
      if (pick(0, 1)) d.languages.insert(langs[pick(0, 1)]);
      d.speed_factor = upm::Rational(pick(1, 4), pick(1, 3));
    }
    in.devices.push_back(std::move(d));
  }
  const auto n = static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(max_jobs)));
  for (std::size_t k = 0; k < n; ++k) {
    upm::scheduler::JobSpec j;
    j.id = "j" + std::to_string(k);
    j.model_id = models[pick(0, 3)];
    j.language = langs[pick(0, 1)];
    j.cost = upm::Rational(pick(1, 20), pick(0, 3) ? 1 : pick(1, 4));
    in.jobs.push_back(std::move(j));
  }
  // keep the instance feasible: retarget any orphaned job at a device that exists
  for (auto& j : in.jobs) {
    bool ok = false;
    for (const auto& d : in.devices) ok = ok || upm::scheduler::feasible(j, d);
    if (!ok) {
      const auto& d = in.devices[static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(m) - 1))];
      j.language = *d.languages.begin();
      j.model_id = d.model_id == "kernelset-v1" ? models[pick(0, 3)] : d.model_id;
    }
  }
  return in;
}

}  // namespace testing
