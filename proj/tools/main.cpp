#include "zstad/cli.hpp"

int main(int argc, char** argv) { return zstad::run(argc, argv); }
