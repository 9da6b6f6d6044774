#include "flowcryst_cli/cli.hpp"

int main(int argc, char** argv) { return flowcryst::cli::run(argc, argv); }
