#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "zstad/common.hpp"

int main(int argc, char** argv) {
  // Several cases exercise warning paths on purpose.
  zstad::set_verbosity(zstad::Verbosity::kQuiet);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
