#include <string>
#include <vector>

#include "pfvc/pipeline/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pfvc::pipeline::cli_run(args);
}
