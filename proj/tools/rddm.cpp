#include <iostream>
#include <string>
#include <vector>

#include "rddm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rddm::run_cli(args, std::cout, std::cerr);
}
