#include <iostream>

#include "finprint/cli/cli.hpp"

int main(int argc, char** argv) {
  return finprint::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
