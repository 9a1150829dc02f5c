#include <iostream>
#include <string>
#include <vector>

#include "bidomain/cli_io.hpp"

int main(int argc, char** argv) {
  return bidomain::cli_main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
