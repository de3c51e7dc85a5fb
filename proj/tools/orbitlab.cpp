// orbitlab command-line entry point. See `orbitlab --help`.
#include <atomic>
#include <csignal>
#include <iostream>

#include "orbitlab/cli.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  std::signal(SIGTERM, on_sigint);
  std::ios::sync_with_stdio(false);
  const std::vector<std::string> args(argv + 1, argv + argc);
  return orbitlab::run_cli(args, std::cout, std::cerr, &g_stop);
}
