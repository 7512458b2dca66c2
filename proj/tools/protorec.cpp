#include <iostream>
#include <string>
#include <vector>

#include "protorec/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return protorec::run_cli(args, std::cout, std::cerr);
}
