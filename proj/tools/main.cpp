#include <vector>

#include "rhm/pipeline/pipeline.hpp"

int main(int argc, char** argv) {
  return rhm::pipeline::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
