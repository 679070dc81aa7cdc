#include "trand/cli.hpp"

int main(int argc, char** argv) { return trand::cli::run_cli(argc, argv); }
