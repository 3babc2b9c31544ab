#include "comprox/cli.hpp"
int main(int argc, char** argv) { return comprox::cli_run(argc, argv); }
