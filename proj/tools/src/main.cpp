#include "sgdlab_cli/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return sgdlab::cli::run(argc, argv, std::cout, std::cerr);
}
