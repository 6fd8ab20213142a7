// Reference EXTERNAL plug-in. Speaks the frame protocol on stdin/stdout, or
// on TCP connections with --listen. Runs the built-in kernel named by
// --model, so the same binary can stand in for any kernel.

#include <unistd.h>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "upm/core_model.hpp"
#include "upm/framing.hpp"
#include "upm/kernels.hpp"
#include "upm/net.hpp"

namespace {

struct Options {
  std::string model = "echo";
  std::optional<std::string> hello;
  std::optional<std::string> fail;
  int delay_ms = 0;
  int crash_after = -1;
};

upm::Frame answer(const Options& opt, const upm::Frame& req) {
  upm::Frame out;
  out.job_id = req.job_id;
  out.device_id = req.device_id;
  if (opt.fail) {
    out.kind = upm::FrameKind::Error;
    out.payload = upm::to_bytes(*opt.fail);
    return out;
  }
  try {
    const auto* k = upm::kernels::find_kernel(opt.model);
    out.payload = k != nullptr ? upm::kernels::run(*k, req.payload) : req.payload;
    out.kind = upm::FrameKind::Response;
  } catch (const upm::Error& e) {
    out.kind = upm::FrameKind::Error;
    out.payload = upm::to_bytes(e.detail());
  }
  return out;
}

// One session; returns false if the process should exit.
bool session(const Options& opt, int in_fd, int out_fd, int& served) {
  upm::Frame hello;
  hello.kind = upm::FrameKind::Hello;
  hello.payload = upm::to_bytes(opt.hello.value_or(opt.model));
  upm::net::write_frame(out_fd, hello);
  for (;;) {
    auto f = upm::net::read_frame(in_fd);
    if (!f) return true;
    if (f->kind == upm::FrameKind::Bye) return true;
    if (f->kind != upm::FrameKind::Request) continue;
    if (opt.crash_after >= 0 && served >= opt.crash_after) ::_exit(3);
    if (opt.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opt.delay_ms));
    upm::net::write_frame(out_fd, answer(opt, *f));
    ++served;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"upm reference plug-in"};
  Options opt;
  std::string listen;
  app.add_option("--model", opt.model, "model announced in HELLO and kernel to run");
  app.add_option("--hello", opt.hello, "announce this model instead");
  app.add_option("--fail", opt.fail, "answer every request with ERROR <msg>");
  app.add_option("--delay-ms", opt.delay_ms, "sleep before each response");
  app.add_option("--crash-after", opt.crash_after, "exit abruptly on request N+1");
  app.add_option("--listen", listen, "serve TCP host:port instead of stdio (port 0 picks one)");
  CLI11_PARSE(app, argc, argv);

  upm::net::ignore_sigpipe();
  int served = 0;
  try {
    if (listen.empty()) {
      session(opt, STDIN_FILENO, STDOUT_FILENO, served);
      return 0;
    }
    auto where = upm::net::parse_host_port(listen);
    auto listener = upm::net::tcp_listen(where, 16);
    std::cout << "listening " << where.host << ":" << upm::net::local_port(listener.get()) << std::endl;
    for (;;) {
      auto conn = upm::net::accept_one(listener.get(), std::nullopt);
      try {
        session(opt, conn.get(), conn.get(), served);
      } catch (const upm::Error& e) {
        std::cerr << "upm-echo-plugin: " << e.what() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "upm-echo-plugin: " << e.what() << "\n";
    return 1;
  }
}
