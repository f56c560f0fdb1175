#include <vector>
#include <string>

#include "dsrl/cli.hpp"

int main(int argc, char** argv) {
  return dsrl::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
