#include <iostream>

#include "o3n/cli.hpp"

int main(int argc, char** argv) {
  return o3n::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
