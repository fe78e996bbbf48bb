#include "darqn/cli.hpp"

int main(int argc, char** argv) { return darqn::cli_main(argc, argv); }
