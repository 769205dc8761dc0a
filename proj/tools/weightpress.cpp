#include <string>
#include <vector>

#include "weightpress/cli.hpp"

int main(int argc, char** argv) {
  return weightpress::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
