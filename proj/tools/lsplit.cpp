#include <string>
#include <vector>

#include "lsplit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lsplit::cli::run(args);
}
