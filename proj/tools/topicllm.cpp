#include <string>
#include <vector>

#include "topicllm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return topicllm::cli::run(args);
}
