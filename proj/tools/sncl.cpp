#include "sncl/harness/cli.hpp"

int main(int argc, char** argv) { return sncl::harness::cli_main(argc, argv); }
