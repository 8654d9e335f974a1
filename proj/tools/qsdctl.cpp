#include <iostream>

#include "qsdctl/cli.hpp"

int main(int argc, char** argv) {
  return qsdctl::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
