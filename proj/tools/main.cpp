#include <iostream>

#include "cli/cli.hpp"

int main(int argc, char** argv) {
  int code = 0;
  const auto config = ufcal::cli::parse_args(argc, argv, code);
  if (!config) return code;
  return ufcal::cli::run(*config, std::cout, std::cerr);
}
