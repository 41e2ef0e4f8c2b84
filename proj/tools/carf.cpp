#include <iostream>
#include <string>
#include <vector>

#include "carf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return carf::cli::run(args, std::cout, std::cerr);
}
