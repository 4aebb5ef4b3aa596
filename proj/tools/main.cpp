#include "advpurify/cli/cli.hpp"

int main(int argc, char** argv) {
  return advpurify::cli::run(argc, argv);
}
