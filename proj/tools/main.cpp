#include <iostream>
#include <string>
#include <vector>

#include "a3t/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return a3t::run_cli(args, std::cout, std::cerr);
}
