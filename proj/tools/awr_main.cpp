#include "awr/cli.hpp"
#include "awr/runtime.hpp"

int main(int argc, char** argv) {
  awr::tune_allocator();
  awr::flush_subnormals();
  return awr::cli::run(argc, argv);
}
