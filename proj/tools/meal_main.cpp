#include <iostream>

#include "meal/cli.hpp"

int main(int argc, char** argv) {
  return meal::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
