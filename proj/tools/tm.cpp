#include <string>
#include <vector>

#include "tm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return timemachine::cli::run(args);
}
