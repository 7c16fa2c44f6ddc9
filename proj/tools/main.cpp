#include <string>
#include <vector>

#include "causalpose/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return causalpose::cli::run(args);
}
