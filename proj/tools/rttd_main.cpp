#include <iostream>

#include "rttd/cli.hpp"

int main(int argc, char** argv) {
  rttd::cli::apply_thread_limit();
  return rttd::cli::run(argc, argv, std::cout, std::cerr);
}
