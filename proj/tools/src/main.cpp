#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "iclner_cli/app.hpp"

int main(int argc, char** argv) {
  // stdout carries reports and CSV; logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("iclner"));
  std::vector<std::string> args(argv + 1, argv + argc);
  return iclner::cli::run_cli(args, std::cout, std::cerr);
}
