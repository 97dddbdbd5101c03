#include <iostream>

#include "egal/cli.hpp"

int main(int argc, char** argv) { return egal::run_cli(argc, argv, std::cout, std::cerr); }
