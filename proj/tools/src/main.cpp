#include "noma_tools/cli.hpp"

int main(int argc, char** argv) { return noma::cli_main(argc, argv); }
