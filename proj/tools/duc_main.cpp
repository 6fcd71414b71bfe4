#include <string>
#include <vector>

#include "duc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return duc::cli::run(args);
}
