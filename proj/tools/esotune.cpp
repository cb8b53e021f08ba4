#include <iostream>
#include <string>
#include <vector>

#include "esotune/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return esotune::run_cli(args, std::cout, std::cerr);
}
