#include "audeeg/alloc.h"
#include "audeeg/cli.h"

int main(int argc, char** argv) {
  audeeg::tune_allocator();
  return audeeg::cli::run({argv + 1, argv + argc});
}
