#include <iostream>
#include <string>
#include <vector>

#include "dsvqa/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dsvqa::run_cli(args, std::cout, std::cerr);
}
