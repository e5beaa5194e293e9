#include "dice/cli.hpp"

int main(int argc, char** argv) { return dice::cli::cli_main(argc, argv); }
