#include <iostream>
#include <string>
#include <vector>

#include "dsam/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dsam::cli::run(args, std::cout, std::cerr);
}
