#include "chanalign/harness/cli.hpp"

int main(int argc, char** argv) { return harness::cli_main(argc, argv); }
