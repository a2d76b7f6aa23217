#include <string>
#include <vector>

#include "promptforge/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pf::cli::run_command(args);
}
