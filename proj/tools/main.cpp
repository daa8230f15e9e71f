#include "difftad/cli.hpp"

int main(int argc, char** argv) { return difftad::run_cli(argc, argv); }
