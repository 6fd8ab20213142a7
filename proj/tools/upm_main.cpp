#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "upm/backends.hpp"
#include "upm/coupler.hpp"
#include "upm/fileapi.hpp"
#include "upm/reducer.hpp"
#include "upm/registry.hpp"
#include "upm/scheduler.hpp"
#include "upm/server.hpp"

namespace {

upm::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server != nullptr) g_server->request_stop();
}

std::string slurp(const std::string& path) {
  if (path == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream in(path, std::ios::binary);
  if (!in) throw upm::Error(upm::ErrorCode::InvalidSpec, "cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void emit(const std::string& path, const std::string& data) {
  if (path == "-") {
    std::cout << data << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
  if (!out) throw upm::Error(upm::ErrorCode::BackendFailure, "cannot write " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified programming model runtime: devices as files"};
  app.require_subcommand(1);

  std::optional<std::string> registry_flag;
  int verbosity = 0;
  app.add_option("--registry", registry_flag, "registry file (default: $UPM_REGISTRY or ~/.config/upm/registry.json)");
  app.add_flag("-v", verbosity, "more output on stderr (repeatable)");

  std::string manifest_path;
  bool probe = false;
  auto* install = app.add_subcommand("install", "install a device manifest");
  install->add_option("manifest", manifest_path, "manifest JSON file, or - for stdin")->required();
  install->add_flag("--probe", probe, "start the device once before installing");

  std::string name;
  auto* uninstall = app.add_subcommand("uninstall", "remove an installed device");
  uninstall->add_option("name", name, "device name")->required();

  auto* list = app.add_subcommand("list", "list installed devices");

  std::string device, model, in_path = "-", out_path = "-";
  double timeout_secs = 60;
  auto* run = app.add_subcommand("run", "write one job to a device and print its result");
  run->add_option("--device", device, "device name")->required();
  run->add_option("--model", model, "kernel to select on the device");
  run->add_option("--in", in_path, "input file or -");
  run->add_option("--out", out_path, "output file or -");
  run->add_option("--timeout", timeout_secs, "seconds to wait for the result")->check(CLI::NonNegativeNumber);

  std::string spec_path;
  bool trace = false;
  auto* reduce = app.add_subcommand("reduce", "reduce a system description to one CPU plus devices");
  reduce->add_option("spec", spec_path, "system spec JSON")->required();
  reduce->add_flag("--trace", trace, "print the rewrite steps");

  std::string jobs_path;
  bool optimal = false;
  auto* assign = app.add_subcommand("assign", "assign a job batch to installed devices");
  assign->add_option("--jobs", jobs_path, "job batch JSON")->required();
  assign->add_flag("--optimal", optimal, "exhaustive search instead of LPT");

  std::string topology_path, report_path;
  std::size_t max_steps = 100000;
  auto* couple = app.add_subcommand("couple", "run coupled applications to quiescence");
  couple->add_option("topology", topology_path, "topology JSON")->required();
  couple->add_option("--max-steps", max_steps, "relay pass limit");
  couple->add_option("--report", report_path, "also write the report here");

  std::string listen = "127.0.0.1:7341";
  auto* serve = app.add_subcommand("serve", "serve the file API over the frame protocol");
  serve->add_option("--listen", listen, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    std::unique_ptr<upm::Registry> loaded;
    auto registry_ref = [&]() -> upm::Registry& {
      if (!loaded) {
        loaded = std::make_unique<upm::Registry>(upm::default_registry_path(registry_flag));
        if (verbosity > 0) std::cerr << "registry " << loaded->path().string() << "\n";
      }
      return *loaded;
    };

    if (*install) {
      auto d = upm::parse_manifest(slurp(manifest_path));
      if (probe) {
        auto backend = upm::start_backend(d);
        backend->stop();
      }
      registry_ref().install(d);
      if (verbosity > 0) std::cerr << "installed " << d.name << "\n";
    } else if (*uninstall) {
      registry_ref().uninstall(name);
    } else if (*list) {
      for (const auto& d : registry_ref().list())
        std::cout << d.name << "\t" << upm::to_string(d.device_class) << "\t" << d.model_id << "\t"
                  << d.speed_factor.to_string() << "\n";
    } else if (*run) {
      upm::Runtime runtime(registry_ref());
      const auto input = slurp(in_path);
      auto h = runtime.open("upm://" + device + (model.empty() ? "" : "?model=" + model));
      const auto job = h.write(upm::to_bytes(input));
      if (verbosity > 0) std::cerr << "job " << job.value << " on " << device << " (" << h.model() << ")\n";
      const auto result = h.read(std::chrono::milliseconds(static_cast<long long>(timeout_secs * 1000)));
      h.close();
      emit(out_path, upm::to_string(result));
    } else if (*reduce) {
      const auto spec = upm::reducer::parse_spec(slurp(spec_path));
      std::cout << upm::reducer::format_reduction(spec, upm::reducer::reduce(spec), trace);
    } else if (*assign) {
      const auto jobs = upm::scheduler::parse_jobs(slurp(jobs_path));
      const auto devices = registry_ref().list();
      const auto a = optimal ? upm::scheduler::optimal_assign(jobs, devices) : upm::scheduler::greedy_assign(jobs, devices);
      std::cout << upm::scheduler::format_assignment(a, jobs, devices);
    } else if (*couple) {
      upm::Runtime runtime(registry_ref());
      upm::coupling::Coordinator coordinator(runtime, upm::coupling::parse_topology(slurp(topology_path)));
      const auto report = coordinator.run_until_quiescent(max_steps);
      coordinator.shutdown();
      const auto text = upm::coupling::format_report(report);
      std::cout << text;
      if (!report_path.empty()) emit(report_path, text);
      if (verbosity > 0) std::cerr << "relay passes " << report.steps << "\n";
      if (report.state == upm::coupling::FinalState::Failed)
        throw upm::Error(upm::ErrorCode::BackendFailure, report.failed_app + ": " + report.detail);
    } else if (*serve) {
      upm::Runtime runtime(registry_ref());
      upm::Server server(runtime, upm::net::parse_host_port(listen));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening " << upm::net::parse_host_port(listen).host << ":" << server.port() << std::endl;
      server.run();
      g_server = nullptr;
    }
  } catch (const upm::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "BACKEND_FAILURE: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
