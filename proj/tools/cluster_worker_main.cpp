#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "upm/backends.hpp"
#include "upm/minimp.hpp"

int main(int argc, char** argv) {
  CLI::App app{"upm cluster rank process"};
  std::string socket;
  int rank = -1;
  int size = 0;
  app.add_option("--socket", socket, "router socket path")->required();
  app.add_option("--rank", rank, "this rank")->required()->check(CLI::NonNegativeNumber);
  app.add_option("--size", size, "number of ranks")->required()->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    auto ep = upm::mp::Endpoint::connect(socket, rank, size);
    upm::run_cluster_worker(ep);
  } catch (const std::exception& e) {
    std::cerr << "upm-cluster-worker[" << rank << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
