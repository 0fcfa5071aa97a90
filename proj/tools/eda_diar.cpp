// tools/eda_diar.cpp

#include <iostream>

#include "eda/cli.hpp"

int main(int argc, char **argv) {
  return eda::cli::run_cli(argc, argv, std::cout, std::cerr);
}
