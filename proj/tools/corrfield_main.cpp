#include <string>
#include <vector>

#include "corrfield/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return corrfield::cli::run_cli(args);
}
