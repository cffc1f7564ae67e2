#include <iostream>

#include "exgnas/cli.hpp"

int main(int argc, char** argv) {
  return exgnas::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
